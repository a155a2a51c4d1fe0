use radopf::lindistflow::hat_v;
use radopf::netmodel::injection_feasible;
use radopf::powerflow::{sweep_solve, SweepOptions};
use radopf_cli::experiments::{run_gap_experiment, sample_injection, ExperimentError};
use radopf_cli::netfile::{embedded_dataset, parse_network};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_sample_matches_recomputation() {
    let ds = embedded_dataset("sce56").unwrap();
    let rep = run_gap_experiment(&ds, 200, 7).unwrap();
    assert_eq!(rep.records.len(), 200);
    let net = &ds.network;
    let mut best = 0.0f64;
    for rec in &rep.records {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        rng.set_stream(rec.index as u64);
        let s = sample_injection(&ds.portfolio, &mut rng);
        assert!(injection_feasible(&ds.portfolio, &s));
        let st = sweep_solve(net, &s, &SweepOptions::default()).unwrap();
        let vh = hat_v(net, &s);
        let eps = (1..net.bus_count()).map(|i| (vh[i] - st.v[i]).abs()).fold(0.0, f64::max);
        let inside = (1..net.bus_count()).all(|i| st.v[i] >= net.vmin()[i] && st.v[i] <= net.vmax()[i]);
        assert_eq!(rec.feasible, inside);
        if inside {
            assert_eq!(rec.eps, Some(eps));
            best = best.max(eps);
        } else {
            assert_eq!(rec.eps, None);
        }
    }
    assert_eq!(rep.eps_estimate, best);
    assert!(rep.eps_estimate > 0.0);
}

#[test]
fn same_seed_same_report() {
    let ds = embedded_dataset("sce47").unwrap();
    let a = run_gap_experiment(&ds, 64, 3).unwrap();
    let b = run_gap_experiment(&ds, 64, 3).unwrap();
    assert_eq!(a, b);
    let c = run_gap_experiment(&ds, 64, 4).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn prefix_of_a_longer_run_is_identical() {
    let ds = embedded_dataset("sce47").unwrap();
    let short = run_gap_experiment(&ds, 20, 9).unwrap();
    let long = run_gap_experiment(&ds, 50, 9).unwrap();
    assert_eq!(short.records[..], long.records[..20]);
}

#[test]
fn deviceless_network_has_zero_gap() {
    let text =
        "[base]\ns_mva 1\nv_kv 12\n[substation]\nbus 1\nv0 1.0\n[lines]\nunits pu\n1 2 0.01 0.02\n2 3 0.01 0.02\n";
    let ds = parse_network("bare", text).unwrap();
    let rep = run_gap_experiment(&ds, 10, 1).unwrap();
    assert_eq!(rep.feasible_samples, 10);
    assert_eq!(rep.eps_estimate, 0.0);
}

#[test]
fn impossible_bounds_yield_no_samples() {
    let text = "[base]\ns_mva 1\nv_kv 12\n[substation]\nbus 1\nv0 1.0\n[buses]\ndefault 1.1 1.2\n[lines]\nunits pu\n1 2 0.01 0.02\n[devices]\n2 load 0.5 0.1\n";
    let ds = parse_network("tight", text).unwrap();
    assert!(matches!(run_gap_experiment(&ds, 5, 1), Err(ExperimentError::NoFeasibleSamples { samples: 5 })));
    assert!(matches!(run_gap_experiment(&ds, 0, 1), Err(ExperimentError::InvalidArgument(_))));
}
