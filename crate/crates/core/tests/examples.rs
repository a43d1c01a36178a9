//! Every example must keep running against the current API.

macro_rules! example {
    ($name:ident) => {
        mod $name {
            include!(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/examples/",
                stringify!($name),
                ".rs"
            ));
        }

        #[test]
        fn $name() {
            $name::run().unwrap();
        }
    };
}

example!(linear_convergence);
example!(tamed_quartic);
example!(semi_tamed_cubic);
example!(cstm_stability_sweep);
example!(tamed_vs_semi_tamed);
example!(analytic_thresholds);
example!(amplification_check);
example!(single_path);
example!(custom_problem);
