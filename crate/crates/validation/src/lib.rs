//! Holds the `acceptance` test target, which prints one pass/fail line per
//! criterion: `cargo test -p nngp-validation --test acceptance [-- 3 7]`.
