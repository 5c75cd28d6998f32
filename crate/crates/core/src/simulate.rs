//! Circulant-embedding FFT simulation of truncated Gaussian linear processes.
//!
//! A length-`N` truncation `X*_i = sum_{t<N} A_t eps_{i-t}` is approximated
//! by a circular convolution: for each feature `j` the flattened coefficient
//! row `a_{N,j} = [(A_1)_{j.}, ..., (A_{N-1})_{j.}, (A_0)_{j.}]` is convolved
//! with one shared innovation vector of length `N d` by an FFT product, and
//! every `d`-th output is kept. The resulting length-`N` path is cut into
//! `floor(N / n)` segments of length `n`.
//!
//! Segments are weakly dependent on each other; downstream code treats them
//! as independent copies.

use std::io::Read;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::model::{coefficient, CoefficientSpec};
use crate::rng;
use crate::{Error, Result};

/// Default cap on the FFT length `N d`.
pub const DEFAULT_MAX_FFT_LEN: usize = 1 << 31;
/// Allowed imaginary residue relative to the output magnitude.
pub const IMAG_RESIDUE_TOLERANCE: f64 = 1e-8;
/// Magic prefix of the binary batch format.
pub const BATCH_MAGIC: &[u8; 7] = b"LRDSIM1";

#[derive(Clone, Debug)]
pub struct SimulationPlan {
    pub spec: CoefficientSpec,
    /// Length of each copy.
    pub n: usize,
    /// Truncation length `N` of the linear process.
    pub truncation_len: usize,
    pub seed: u64,
    pub copies: usize,
    pub max_fft_len: usize,
}

impl SimulationPlan {
    /// Plan with the customary truncation `N = n^2`.
    pub fn new(spec: CoefficientSpec, n: usize, seed: u64, copies: usize) -> Self {
        SimulationPlan {
            spec,
            n,
            truncation_len: n.saturating_mul(n),
            seed,
            copies,
            max_fft_len: DEFAULT_MAX_FFT_LEN,
        }
    }

    pub fn with_truncation_len(mut self, truncation_len: usize) -> Self {
        self.truncation_len = truncation_len;
        self
    }

    /// `K_{N,n} = floor(N / n)`.
    pub fn available_copies(&self) -> usize {
        if self.n == 0 {
            0
        } else {
            self.truncation_len / self.n
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidPlan("n must be positive".into()));
        }
        if self.truncation_len < self.n {
            return Err(Error::InvalidPlan(format!(
                "truncation length {} is below n = {}",
                self.truncation_len, self.n
            )));
        }
        if self.copies == 0 || self.copies > self.available_copies() {
            return Err(Error::InvalidPlan(format!(
                "requested {} copies, between 1 and {} available",
                self.copies,
                self.available_copies()
            )));
        }
        let len = self
            .truncation_len
            .checked_mul(self.spec.d)
            .ok_or(Error::MemoryBudget {
                requested: usize::MAX,
                cap: self.max_fft_len,
            })?;
        if len > self.max_fft_len {
            return Err(Error::MemoryBudget {
                requested: len,
                cap: self.max_fft_len,
            });
        }
        Ok(())
    }
}

/// `copies` realisations, each an `n x p` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub copies: Vec<DMatrix<f64>>,
    pub seed: u64,
    pub derivation: String,
}

impl SampleBatch {
    pub fn n(&self) -> usize {
        self.copies.first().map_or(0, |c| c.nrows())
    }

    pub fn p(&self) -> usize {
        self.copies.first().map_or(0, |c| c.ncols())
    }
}

const DERIVATION: &str = "chacha8(seed, stream 0) standard normals, one N*d innovation vector shared by all features";

/// Scalar simulation (`p = d = 1`).
pub fn simulate_unidimensional(plan: &SimulationPlan) -> Result<SampleBatch> {
    if plan.spec.p != 1 || plan.spec.d != 1 {
        return Err(Error::InvalidPlan(format!(
            "unidimensional simulation needs p = d = 1, got p = {}, d = {}",
            plan.spec.p, plan.spec.d
        )));
    }
    simulate_multidimensional(plan)
}

/// Feature-by-feature simulation with a shared innovation spectrum.
pub fn simulate_multidimensional(plan: &SimulationPlan) -> Result<SampleBatch> {
    plan.validate()?;
    let (n, p, d) = (plan.n, plan.spec.p, plan.spec.d);
    let big_n = plan.truncation_len;
    let len = big_n * d;

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let mut scratch = vec![
        Complex::new(0.0, 0.0);
        forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len())
    ];

    let mut rng = rng::stream(plan.seed, rng::STREAM_INNOVATIONS);
    let mut spectrum: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    forward.process_with_scratch(&mut spectrum, &mut scratch);

    let rows = plan.copies * n;
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut work = vec![Complex::new(0.0, 0.0); len];
    let coefficients = CoefficientRows::new(&plan.spec, big_n)?;
    let scale = 1.0 / len as f64;

    for j in 0..p {
        coefficients.fill_row(j, &mut work)?;
        forward.process_with_scratch(&mut work, &mut scratch);
        for (w, f) in work.iter_mut().zip(spectrum.iter()) {
            *w *= *f;
        }
        inverse.process_with_scratch(&mut work, &mut scratch);

        let (mut residue, mut magnitude) = (0.0_f64, 0.0_f64);
        for z in work.iter() {
            residue = residue.max(z.im.abs());
            magnitude = magnitude.max(z.re.abs());
        }
        if residue > IMAG_RESIDUE_TOLERANCE * magnitude {
            return Err(Error::FftResidue {
                residue: residue * scale,
                magnitude: magnitude * scale,
            });
        }
        columns.push((0..rows).map(|i| work[i * d].re * scale).collect());
    }
    drop(work);
    drop(spectrum);

    let copies = (0..plan.copies)
        .map(|k| DMatrix::from_fn(n, p, |i, j| columns[j][k * n + i]))
        .collect();
    Ok(SampleBatch {
        copies,
        seed: plan.seed,
        derivation: DERIVATION.to_string(),
    })
}

/// Writes `a_{N,j}` into a complex buffer of length `N d`.
enum CoefficientRows {
    /// `A_t = w_t M`.
    Separable { base: DMatrix<f64>, weights: Vec<f64> },
    General { coeffs: Vec<DMatrix<f64>>, big_n: usize },
}

impl CoefficientRows {
    fn new(spec: &CoefficientSpec, big_n: usize) -> Result<Self> {
        if let Some(base) = spec.separable_base() {
            let weights = (0..big_n).map(|t| (t as f64 + 1.0).powf(-spec.beta)).collect();
            return Ok(CoefficientRows::Separable { base, weights });
        }
        // custom callbacks are not evaluated past `spec.truncation`
        let coeffs = (0..big_n.min(spec.truncation + 1))
            .map(|t| coefficient(spec, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(CoefficientRows::General { coeffs, big_n })
    }

    fn fill_row(&self, j: usize, buf: &mut [Complex<f64>]) -> Result<()> {
        let (big_n, d) = match self {
            CoefficientRows::Separable { base, weights } => (weights.len(), base.ncols()),
            CoefficientRows::General { coeffs, big_n } => (*big_n, coeffs[0].ncols()),
        };
        debug_assert_eq!(buf.len(), big_n * d);
        for t in 0..big_n {
            // A_0 sits in the last block, A_t (t >= 1) in block t - 1.
            let block = if t == 0 { big_n - 1 } else { t - 1 };
            let slot = &mut buf[block * d..(block + 1) * d];
            match self {
                CoefficientRows::Separable { base, weights } => {
                    let w = weights[t];
                    for (r, z) in slot.iter_mut().enumerate() {
                        *z = Complex::new(w * base[(j, r)], 0.0);
                    }
                }
                CoefficientRows::General { coeffs, .. } => match coeffs.get(t) {
                    Some(a) => {
                        for (r, z) in slot.iter_mut().enumerate() {
                            *z = Complex::new(a[(j, r)], 0.0);
                        }
                    }
                    None => slot.fill(Complex::new(0.0, 0.0)),
                },
            }
        }
        Ok(())
    }
}

/// Serialises a batch: `LRDSIM1`, then `n, p, copies, seed` as little-endian
/// `u64`, then each copy's entries row-major as little-endian `f64`.
pub fn encode_batch(batch: &SampleBatch) -> Vec<u8> {
    let (n, p) = (batch.n(), batch.p());
    let mut out = Vec::with_capacity(7 + 32 + batch.copies.len() * n * p * 8);
    out.extend_from_slice(BATCH_MAGIC);
    for v in [n as u64, p as u64, batch.copies.len() as u64, batch.seed] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for copy in &batch.copies {
        for i in 0..n {
            for j in 0..p {
                out.extend_from_slice(&copy[(i, j)].to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_batch(bytes: &[u8]) -> Result<SampleBatch> {
    let mut reader = bytes;
    let mut magic = [0u8; 7];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated magic".into()))?;
    if &magic != BATCH_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut header = [0u64; 4];
    for v in header.iter_mut() {
        let mut buf = [0u8; 8];
        reader
            .read_exact(&mut buf)
            .map_err(|_| Error::Format("truncated header".into()))?;
        *v = u64::from_le_bytes(buf);
    }
    let [n, p, copies, seed] = header;
    let to_usize = |v: u64| usize::try_from(v).map_err(|_| Error::Format("size overflow".into()));
    let (n, p, copies) = (to_usize(n)?, to_usize(p)?, to_usize(copies)?);
    let canonical = if copies == 0 { n == 0 && p == 0 } else { n > 0 && p > 0 };
    if !canonical {
        return Err(Error::Format(format!("inconsistent shape n = {n}, p = {p}, copies = {copies}")));
    }
    let count = n
        .checked_mul(p)
        .and_then(|x| x.checked_mul(copies))
        .and_then(|x| x.checked_mul(8))
        .ok_or_else(|| Error::Format("size overflow".into()))?;
    if reader.len() != count {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {count}",
            reader.len()
        )));
    }
    let values: Vec<f64> = reader
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let per_copy = n * p;
    let copies = (0..copies)
        .map(|k| {
            let chunk = &values[k * per_copy..(k + 1) * per_copy];
            DMatrix::from_row_slice(n, p, chunk)
        })
        .collect();
    Ok(SampleBatch {
        copies,
        seed,
        derivation: DERIVATION.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_coefficient_permutes_innovations() {
        let spec = CoefficientSpec::white_noise(1).unwrap();
        let plan = SimulationPlan::new(spec, 8, 11, 1).with_truncation_len(8);
        let out = simulate_unidimensional(&plan).unwrap();
        let mut rng = rng::stream(11, rng::STREAM_INNOVATIONS);
        let innov: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut got: Vec<f64> = out.copies[0].iter().cloned().collect();
        // circular convolution with a unit impulse in the last slot is a shift
        for (i, &g) in got.iter().enumerate() {
            assert!((g - innov[(i + 1) % 8]).abs() < 1e-12);
        }
        let mut sorted = innov.clone();
        sorted.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(sorted.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    // Direct O(N^2 d) circular convolution as the FFT oracle.
    #[test]
    fn fft_route_matches_direct_circular_convolution() {
        let spec = CoefficientSpec::custom(2, 3, 1.5, |t| {
            DMatrix::from_fn(2, 3, |j, k| ((j * 3 + k + 1) as f64) * ((t + 1) as f64).powf(-1.5))
        })
        .unwrap();
        let big_n = 24;
        let plan = SimulationPlan::new(spec.clone(), 6, 5, 4).with_truncation_len(big_n);
        let out = simulate_multidimensional(&plan).unwrap();
        let d = 3;
        let mut rng = rng::stream(5, rng::STREAM_INNOVATIONS);
        let e: Vec<f64> = (0..big_n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        for j in 0..2 {
            let mut a = vec![0.0; big_n * d];
            for t in 0..big_n {
                let block = if t == 0 { big_n - 1 } else { t - 1 };
                let coef = coefficient(&spec, t).unwrap();
                for r in 0..d {
                    a[block * d + r] = coef[(j, r)];
                }
            }
            for i in 0..big_n {
                let m = i * d;
                let y: f64 = (0..big_n * d)
                    .map(|q| a[q] * e[(m + big_n * d - q) % (big_n * d)])
                    .sum();
                let (copy, row) = (i / 6, i % 6);
                assert!((out.copies[copy][(row, j)] - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn plan_validation() {
        let spec = CoefficientSpec::toeplitz(2.0, 1).unwrap();
        let short = SimulationPlan::new(spec.clone(), 10, 0, 1).with_truncation_len(9);
        assert!(matches!(simulate_unidimensional(&short), Err(Error::InvalidPlan(_))));
        let too_many = SimulationPlan::new(spec.clone(), 10, 0, 11);
        assert!(matches!(simulate_unidimensional(&too_many), Err(Error::InvalidPlan(_))));
        let mut capped = SimulationPlan::new(CoefficientSpec::toeplitz(2.0, 4).unwrap(), 10, 0, 1);
        capped.max_fft_len = 399;
        assert!(matches!(
            simulate_multidimensional(&capped),
            Err(Error::MemoryBudget { requested: 400, cap: 399 })
        ));
        let wrong_dim = SimulationPlan::new(CoefficientSpec::toeplitz(2.0, 2).unwrap(), 10, 0, 1);
        assert!(matches!(simulate_unidimensional(&wrong_dim), Err(Error::InvalidPlan(_))));
    }

    #[test]
    fn identical_plans_are_bitwise_identical() {
        let plan = SimulationPlan::new(CoefficientSpec::toeplitz(0.9, 3).unwrap(), 50, 99, 5);
        let a = simulate_multidimensional(&plan).unwrap();
        let b = simulate_multidimensional(&plan).unwrap();
        assert_eq!(a, b);
        let mut other = plan.clone();
        other.seed = 100;
        assert_ne!(simulate_multidimensional(&other).unwrap().copies, a.copies);
    }

    #[test]
    fn scalar_paths_coincide() {
        let plan = SimulationPlan::new(CoefficientSpec::toeplitz(2.0, 1).unwrap(), 40, 3, 10);
        assert_eq!(
            simulate_unidimensional(&plan).unwrap(),
            simulate_multidimensional(&plan).unwrap()
        );
    }

    #[test]
    fn batch_encoding_round_trips() {
        let plan = SimulationPlan::new(CoefficientSpec::toeplitz(2.0, 2).unwrap(), 5, 42, 3);
        let batch = simulate_multidimensional(&plan).unwrap();
        let bytes = encode_batch(&batch);
        assert_eq!(&bytes[..7], b"LRDSIM1");
        assert_eq!(u64::from_le_bytes(bytes[7..15].try_into().unwrap()), 5);
        assert_eq!(u64::from_le_bytes(bytes[31..39].try_into().unwrap()), 42);
        // first value is copy 0, row 0, column 0; second is row 0, column 1
        assert_eq!(f64::from_le_bytes(bytes[39..47].try_into().unwrap()), batch.copies[0][(0, 0)]);
        assert_eq!(f64::from_le_bytes(bytes[47..55].try_into().unwrap()), batch.copies[0][(0, 1)]);
        assert_eq!(bytes.len(), 39 + 3 * 5 * 2 * 8);
        assert_eq!(decode_batch(&bytes).unwrap(), batch);
    }

    #[test]
    fn malformed_batches_are_rejected() {
        assert!(decode_batch(b"").is_err());
        assert!(decode_batch(b"LRDSIM2").is_err());
        let mut bytes = b"LRDSIM1".to_vec();
        for v in [u64::MAX, 2, 2, 0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(decode_batch(&bytes), Err(Error::Format(_))));
        let plan = SimulationPlan::new(CoefficientSpec::toeplitz(2.0, 2).unwrap(), 4, 1, 2);
        let mut good = encode_batch(&simulate_multidimensional(&plan).unwrap());
        good.pop();
        assert!(decode_batch(&good).is_err());
        // empty copies with a huge count would allocate without bound
        let mut empty = b"LRDSIM1".to_vec();
        for v in [0, 3, u64::MAX >> 8, 0] {
            empty.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(decode_batch(&empty), Err(Error::Format(_))));
        let none = encode_batch(&SampleBatch { copies: Vec::new(), seed: 5, derivation: String::new() });
        assert_eq!(decode_batch(&none).unwrap().copies.len(), 0);
    }
}
