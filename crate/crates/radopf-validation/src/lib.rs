//! Holds the `acceptance` test target, which checks every reproduction
//! criterion and prints one PASS/FAIL line per criterion. Run it with
//! `cargo test -p radopf-validation --test acceptance`.
