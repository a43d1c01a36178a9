// One noise realisation, every scheme, at two resolutions. Coarse grids are
// exact block sums of the fine one, so all trajectories see the same path.
// Writes `single_path.csv` into the system temp directory.
//
// ```text
// cargo run --example single_path
// ```

use std::fs::File;

use jumpsde::increments::{coarsen, RandomSource};
use jumpsde::schemes::integrate_path;
use jumpsde::{models, IncrementGrid, Result, SchemeKind, SchemeSpec};

pub fn run() -> Result<()> {
    let problem = models::cubic_split(2.0, 1.5)?;
    let fine = IncrementGrid::generate(RandomSource::new(2024, 7), 1024, 1, 1.0 / 1024.0, problem.lambda())?;
    let coarse = coarsen(&fine, 32)?;
    println!(
        "W(1) = {:.5} on both grids, {} jumps",
        coarse.brownian_total()[0],
        coarse.count_total()
    );
    assert_eq!(fine.count_total(), coarse.count_total());

    for kind in SchemeKind::ALL {
        let spec = SchemeSpec::new(kind, 0.5)?;
        let fine_path = integrate_path(&problem, &spec, &fine, 1)?;
        let coarse_path = integrate_path(&problem, &spec, &fine, 32)?;
        println!(
            "{:<24} X(1): dt=1/1024 {:>9.5}   dt=1/32 {:>9.5}",
            kind.to_string(),
            fine_path.endpoint().map_or(f64::NAN, |x| x[0]),
            coarse_path.endpoint().map_or(f64::NAN, |x| x[0])
        );
    }

    let path = integrate_path(&problem, &SchemeSpec::cstm(1.0)?, &fine, 1)?;
    let out = std::env::temp_dir().join("single_path.csv");
    path.write_csv(File::create(&out)?)?;
    println!("wrote {}", out.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
