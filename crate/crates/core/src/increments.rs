//! Reproducible Brownian and Poisson increments.
//!
//! Every path owns a [`RandomSource`] keyed by `(seed, stream_id)`. The
//! generator behind it is ChaCha8 with the stream id mapped onto the cipher's
//! stream counter, so per-path sequences are independent of one another and of
//! the order (or thread) in which paths are simulated.
//!
//! A fine [`IncrementGrid`] can be coarsened by an integer ratio: each coarse
//! increment is the exact block sum of the fine ones, which couples the noise
//! seen by simulations at different step sizes.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// Largest per-step Poisson mean served by sequential-search inversion.
pub const INVERSION_MEAN_LIMIT: f64 = 10.0;

/// Per-step Poisson means above this are rejected.
pub const MAX_POISSON_MEAN: f64 = 1.0e6;

const BROWNIAN_CHANNEL: u64 = 0x6272_6f77_6e69_616e;
const POISSON_CHANNEL: u64 = 0x706f_6973_736f_6e00;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key of one independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RandomSource {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A source with the same stream id and a seed hashed with `salt`.
    ///
    /// Used to give the Brownian and Poisson draws of one path (or the paths
    /// of different sweep points) disjoint key material.
    pub fn derive(&self, salt: u64) -> RandomSource {
        RandomSource {
            seed: splitmix64(self.seed ^ splitmix64(salt)),
            stream_id: self.stream_id,
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("dt must be > 0, got {dt}")))
    }
}

/// Poisson(mean) sampler: sequential-search inversion for small means,
/// `rand_distr`'s rejection sampler above [`INVERSION_MEAN_LIMIT`].
#[derive(Clone, Debug)]
pub(crate) struct PoissonSampler {
    mean: f64,
    p0: f64,
    large: Option<Poisson<f64>>,
}

impl PoissonSampler {
    pub(crate) fn new(mean: f64) -> Result<Self> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::invalid(format!(
                "Poisson mean must be finite and >= 0, got {mean}"
            )));
        }
        if mean > MAX_POISSON_MEAN {
            return Err(Error::invalid(format!(
                "Poisson mean {mean} exceeds the supported limit {MAX_POISSON_MEAN}"
            )));
        }
        let large = if mean > INVERSION_MEAN_LIMIT {
            Some(Poisson::new(mean).map_err(|e| Error::invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            mean,
            p0: (-mean).exp(),
            large,
        })
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if let Some(large) = &self.large {
            return large.sample(rng) as u64;
        }
        if self.mean == 0.0 {
            return 0;
        }
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = self.p0;
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= self.mean / k as f64;
            if p == 0.0 {
                // cdf stalled below u through rounding; the tail is exhausted
                break;
            }
            cdf += p;
        }
        k
    }
}

/// `n_steps × m` independent Normal(0, dt) draws, row-major (step-major).
pub fn generate_brownian(source: RandomSource, n_steps: usize, m: usize, dt: f64) -> Result<Vec<f64>> {
    check_dt(dt)?;
    if m == 0 {
        return Err(Error::invalid("Brownian dimension must be >= 1"));
    }
    let scale = dt.sqrt();
    let mut rng = source.rng();
    Ok((0..n_steps * m)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            scale * z
        })
        .collect())
}

/// `n_steps` independent Poisson(lambda·dt) event counts.
pub fn generate_poisson(source: RandomSource, n_steps: usize, lambda: f64, dt: f64) -> Result<Vec<u64>> {
    check_dt(dt)?;
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let sampler = PoissonSampler::new(lambda * dt)?;
    let mut rng = source.rng();
    Ok((0..n_steps).map(|_| sampler.sample(&mut rng)).collect())
}

/// Compensated increments `count - lambda·dt`.
pub fn compensate(counts: &[u64], lambda: f64, dt: f64) -> Vec<f64> {
    let mean = lambda * dt;
    counts.iter().map(|&n| n as f64 - mean).collect()
}

/// Step-by-step increment generator.
///
/// Yields exactly the sequence that [`IncrementGrid::generate`] stores for the
/// same arguments, without materialising it.
pub struct IncrementStream {
    brownian: ChaCha8Rng,
    poisson: ChaCha8Rng,
    sampler: PoissonSampler,
    scale: f64,
}

impl IncrementStream {
    pub fn new(source: RandomSource, dt: f64, lambda: f64) -> Result<Self> {
        check_dt(dt)?;
        if !(lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self {
            brownian: source.derive(BROWNIAN_CHANNEL).rng(),
            poisson: source.derive(POISSON_CHANNEL).rng(),
            sampler: PoissonSampler::new(lambda * dt)?,
            scale: dt.sqrt(),
        })
    }

    /// Fill `dw` with the next Brownian increments and return the event count.
    #[inline]
    pub fn next_into(&mut self, dw: &mut [f64]) -> u64 {
        for w in dw.iter_mut() {
            let z: f64 = self.brownian.sample(StandardNormal);
            *w = self.scale * z;
        }
        self.sampler.sample(&mut self.poisson)
    }
}

/// Brownian and Poisson increments of one path on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementGrid {
    dt_fine: f64,
    n_steps: usize,
    noise_dim: usize,
    brownian: Vec<f64>,
    poisson: Vec<u64>,
    lambda: f64,
}

impl IncrementGrid {
    /// Draw a grid of `n_steps` steps of size `dt` for the path keyed by `source`.
    pub fn generate(source: RandomSource, n_steps: usize, noise_dim: usize, dt: f64, lambda: f64) -> Result<Self> {
        let brownian = generate_brownian(source.derive(BROWNIAN_CHANNEL), n_steps, noise_dim, dt)?;
        let poisson = generate_poisson(source.derive(POISSON_CHANNEL), n_steps, lambda, dt)?;
        Ok(Self {
            dt_fine: dt,
            n_steps,
            noise_dim,
            brownian,
            poisson,
            lambda,
        })
    }

    /// Assemble a grid from explicit increments (row-major Brownian block).
    pub fn from_parts(dt: f64, noise_dim: usize, brownian: Vec<f64>, poisson: Vec<u64>, lambda: f64) -> Result<Self> {
        check_dt(dt)?;
        if noise_dim == 0 {
            return Err(Error::invalid("Brownian dimension must be >= 1"));
        }
        if brownian.len() != poisson.len() * noise_dim {
            return Err(Error::invalid(format!(
                "brownian block has {} entries, expected {} x {}",
                brownian.len(),
                poisson.len(),
                noise_dim
            )));
        }
        if brownian.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("Brownian increments must be finite"));
        }
        if !(lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self {
            dt_fine: dt,
            n_steps: poisson.len(),
            noise_dim,
            brownian,
            poisson,
            lambda,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt_fine
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt_fine
    }

    pub fn brownian(&self) -> &[f64] {
        &self.brownian
    }

    pub fn brownian_row(&self, step: usize) -> &[f64] {
        &self.brownian[step * self.noise_dim..(step + 1) * self.noise_dim]
    }

    pub fn counts(&self) -> &[u64] {
        &self.poisson
    }

    /// Compensated jump increments of this grid.
    pub fn compensated(&self) -> Vec<f64> {
        compensate(&self.poisson, self.lambda, self.dt_fine)
    }

    /// Sum of the Brownian increments in every column.
    pub fn brownian_total(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.noise_dim];
        for row in self.brownian.chunks_exact(self.noise_dim) {
            for (t, w) in total.iter_mut().zip(row) {
                *t += w;
            }
        }
        total
    }

    pub fn count_total(&self) -> u64 {
        self.poisson.iter().sum()
    }

    pub(crate) fn check_ratio(&self, ratio: usize) -> Result<()> {
        if ratio == 0 || !self.n_steps.is_multiple_of(ratio) {
            return Err(Error::invalid(format!(
                "ratio {ratio} does not divide the {} fine steps",
                self.n_steps
            )));
        }
        Ok(())
    }

    /// Block sum of fine steps `[ratio·j, ratio·(j+1))` into `dw`; returns the count.
    ///
    /// Both [`coarsen`] and path integration go through this, so a coarsened grid
    /// and an on-the-fly coarse walk see bitwise identical increments.
    #[inline]
    pub(crate) fn coarse_step_into(&self, ratio: usize, j: usize, dw: &mut [f64]) -> u64 {
        let m = self.noise_dim;
        let start = ratio * j;
        dw.copy_from_slice(&self.brownian[start * m..(start + 1) * m]);
        let mut count = self.poisson[start];
        for k in start + 1..start + ratio {
            for (acc, w) in dw.iter_mut().zip(&self.brownian[k * m..(k + 1) * m]) {
                *acc += w;
            }
            count += self.poisson[k];
        }
        count
    }

    /// Dump as CSV with columns `step,dW_1..dW_m,dN`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_string()];
        header.extend((1..=self.noise_dim).map(|j| format!("dW_{j}")));
        header.push("dN".into());
        out.write_record(&header)?;
        for step in 0..self.n_steps {
            let mut record = vec![step.to_string()];
            record.extend(self.brownian_row(step).iter().map(|w| crate::fmt_f64(*w)));
            record.push(self.poisson[step].to_string());
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Coarse grid whose increments are exact block sums of `ratio` fine steps.
pub fn coarsen(grid: &IncrementGrid, ratio: usize) -> Result<IncrementGrid> {
    grid.check_ratio(ratio)?;
    let n = grid.n_steps / ratio;
    let m = grid.noise_dim;
    let mut brownian = vec![0.0; n * m];
    let mut poisson = Vec::with_capacity(n);
    for j in 0..n {
        poisson.push(grid.coarse_step_into(ratio, j, &mut brownian[j * m..(j + 1) * m]));
    }
    Ok(IncrementGrid {
        dt_fine: grid.dt_fine * ratio as f64,
        n_steps: n,
        noise_dim: m,
        brownian,
        poisson,
        lambda: grid.lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dt_is_rejected() {
        let src = RandomSource::new(1, 0);
        assert!(matches!(
            generate_brownian(src, 3, 1, 0.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(generate_poisson(src, 3, 1.0, -1.0).is_err());
    }

    #[test]
    fn negative_lambda_is_rejected() {
        assert!(generate_poisson(RandomSource::new(1, 0), 3, -0.5, 0.1).is_err());
    }

    #[test]
    fn huge_poisson_mean_is_rejected() {
        assert!(generate_poisson(RandomSource::new(1, 0), 1, 2.0e6, 1.0).is_err());
        assert!(generate_poisson(RandomSource::new(1, 0), 1, 1.0e6, 1.0).is_ok());
    }

    #[test]
    fn same_key_same_draws() {
        let src = RandomSource::new(42, 0);
        assert_eq!(
            generate_brownian(src, 50, 2, 0.01).unwrap(),
            generate_brownian(src, 50, 2, 0.01).unwrap()
        );
        assert_eq!(
            generate_poisson(src, 50, 3.0, 0.1).unwrap(),
            generate_poisson(src, 50, 3.0, 0.1).unwrap()
        );
    }

    #[test]
    fn distinct_streams_differ() {
        let a = generate_brownian(RandomSource::new(42, 0), 16, 1, 0.01).unwrap();
        let b = generate_brownian(RandomSource::new(42, 1), 16, 1, 0.01).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn zero_intensity_gives_no_events() {
        let counts = generate_poisson(RandomSource::new(3, 9), 1000, 0.0, 0.5).unwrap();
        assert!(counts.iter().all(|&n| n == 0));
    }

    #[test]
    fn compensate_subtracts_mean() {
        assert_eq!(compensate(&[0, 0], 1.0, 0.5), vec![-0.5, -0.5]);
        assert_eq!(compensate(&[2], 1.0, 1.0), vec![1.0]);
    }

    #[test]
    fn large_mean_uses_rejection_sampler() {
        let counts = generate_poisson(RandomSource::new(5, 0), 20_000, 9.0, 60.0).unwrap();
        let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
        // Poisson(540): standard error of the mean is sqrt(540/20000)
        assert!((mean - 540.0).abs() < 4.0 * (540.0f64 / 20_000.0).sqrt(), "mean {mean}");
    }

    #[test]
    fn coarsen_block_sums() {
        let grid = IncrementGrid::from_parts(0.25, 1, vec![0.1, -0.2, 0.3, 0.4], vec![1, 0, 2, 3], 1.0).unwrap();
        let coarse = coarsen(&grid, 2).unwrap();
        assert_eq!(coarse.n_steps(), 2);
        assert_eq!(coarse.dt(), 0.5);
        assert!((coarse.brownian()[0] - (-0.1)).abs() < 1e-15);
        assert!((coarse.brownian()[1] - 0.7).abs() < 1e-15);
        assert_eq!(coarse.counts(), &[1, 5]);
    }

    #[test]
    fn coarsen_identity_and_bad_ratio() {
        let grid = IncrementGrid::generate(RandomSource::new(7, 3), 12, 2, 0.1, 2.0).unwrap();
        assert_eq!(coarsen(&grid, 1).unwrap(), grid);
        assert!(coarsen(&grid, 5).is_err());
        assert!(coarsen(&grid, 0).is_err());
    }

    #[test]
    fn stream_matches_grid() {
        let src = RandomSource::new(11, 4);
        let grid = IncrementGrid::generate(src, 100, 2, 0.01, 3.0).unwrap();
        let mut stream = IncrementStream::new(src, 0.01, 3.0).unwrap();
        let mut dw = [0.0; 2];
        for step in 0..100 {
            let n = stream.next_into(&mut dw);
            assert_eq!(&dw[..], grid.brownian_row(step));
            assert_eq!(n, grid.counts()[step]);
        }
    }

    #[test]
    fn csv_dump_has_expected_columns() {
        let grid = IncrementGrid::from_parts(0.5, 2, vec![0.1, 0.2, 0.3, 0.4], vec![0, 1], 1.0).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "step,dW_1,dW_2,dN\n0,0.1,0.2,0\n1,0.3,0.4,1\n");
    }
}
