//! Generalized tensor random projections.
//!
//! A projection maps an order-`N` tensor to an order-`M` tensor by `R`
//! mode-wise matrix products followed by one tensor-wise contraction of the
//! remaining modes:
//!
//! ```text
//! GTRP(X) = X ×_1 H_1 ... ×_R H_R ×_{R+1:N} H
//! ```
//!
//! Pure mode-wise projections are represented with `R = M = N` and no tensor
//! block; the pure tensor-wise case is `R = 0, M = 1`.
//!
//! Entries are drawn i.i.d. from the sparse sign law
//! `P(+√ψ) = P(−√ψ) = 1/(2ψ)`, `P(0) = 1 − 1/ψ`, which has unit variance.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, StreamRng};
use crate::tensor::DenseTensor;

pub const DEFAULT_PSI: f64 = 3.0;

/// Draws `n` i.i.d. sparse sign entries.
pub fn sample_projection_entries<R: Rng + ?Sized>(
    n: usize,
    psi: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_psi(psi)?;
    let s = psi.sqrt();
    let half = 0.5 / psi;
    let full = 1.0 / psi;
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random();
            if u < half {
                s
            } else if u < full {
                -s
            } else {
                0.0
            }
        })
        .collect())
}

fn check_psi(psi: f64) -> Result<()> {
    if !(psi >= 1.0) || !psi.is_finite() {
        return Err(Error::Parameter(format!(
            "psi must be a finite value >= 1, got {psi}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct GtrpSpec {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    mode_matrices: Vec<DMatrix<f64>>,
    tensor_block: Option<DenseTensor>,
    psi: f64,
    seed: u64,
    preserve_modes: Vec<usize>,
    scale_on_apply: bool,
}

/// Shape and law of a projection, without its realized entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDesign {
    pub output_shape: Vec<usize>,
    /// Number of leading modes projected by matrices.
    pub r: usize,
    pub psi: f64,
    /// Zero-based modes whose matrix is the exact identity.
    #[serde(default)]
    pub preserve_modes: Vec<usize>,
}

impl ProjectionDesign {
    pub fn tensorwise(q: usize, psi: f64) -> Self {
        Self {
            output_shape: vec![q],
            r: 0,
            psi,
            preserve_modes: vec![],
        }
    }

    pub fn modewise(q: &[usize], psi: f64) -> Self {
        Self {
            output_shape: q.to_vec(),
            r: q.len(),
            psi,
            preserve_modes: vec![],
        }
    }

    pub fn identity(shape: &[usize]) -> Self {
        Self {
            output_shape: shape.to_vec(),
            r: shape.len(),
            psi: 1.0,
            preserve_modes: (0..shape.len()).collect(),
        }
    }

    pub fn build(&self, input_shape: &[usize], seed: u64) -> Result<GtrpSpec> {
        build_gtrp(
            input_shape,
            &self.output_shape,
            self.r,
            self.psi,
            seed,
            &self.preserve_modes,
        )
    }
}

/// Builds a projection deterministically from `seed`.
///
/// Mode matrices are generated first, in mode order and column-major within
/// each matrix, then the tensor block in its canonical layout. Preserved
/// modes consume no randomness.
pub fn build_gtrp(
    input_shape: &[usize],
    output_shape: &[usize],
    r: usize,
    psi: f64,
    seed: u64,
    preserve_modes: &[usize],
) -> Result<GtrpSpec> {
    check_psi(psi)?;
    let n = input_shape.len();
    let m = output_shape.len();
    if n == 0 || input_shape.contains(&0) {
        return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
    }
    if m == 0 || output_shape.contains(&0) {
        return Err(Error::Shape(format!(
            "invalid output shape {output_shape:?}"
        )));
    }
    if m > n {
        return Err(Error::Parameter(format!(
            "output order {m} exceeds input order {n}"
        )));
    }
    if r > m || (r == m && m != n) {
        return Err(Error::Parameter(format!(
            "R = {r} is inconsistent with M = {m}, N = {n}: need R < M <= N, or R = M = N"
        )));
    }
    let mut preserve = preserve_modes.to_vec();
    preserve.sort_unstable();
    preserve.dedup();
    for &k in &preserve {
        if k >= r {
            return Err(Error::Parameter(format!(
                "preserved mode {k} is not one of the {r} mode-wise modes"
            )));
        }
        if output_shape[k] != input_shape[k] {
            return Err(Error::Shape(format!(
                "preserved mode {k} needs q = p = {}, got q = {}",
                input_shape[k], output_shape[k]
            )));
        }
    }

    let mut rng = rng_from_seed(seed);
    let mut mode_matrices = Vec::with_capacity(r);
    for k in 0..r {
        let (q, p) = (output_shape[k], input_shape[k]);
        if preserve.binary_search(&k).is_ok() {
            mode_matrices.push(DMatrix::identity(q, p));
        } else {
            let e = sample_projection_entries(q * p, psi, &mut rng)?;
            mode_matrices.push(DMatrix::from_vec(q, p, e));
        }
    }
    let tensor_block = if r < m {
        let mut shape = output_shape[r..].to_vec();
        shape.extend_from_slice(&input_shape[r..]);
        let len = shape.iter().product();
        Some(DenseTensor::new(
            shape,
            sample_projection_entries(len, psi, &mut rng)?,
        )?)
    } else {
        None
    };
    Ok(GtrpSpec {
        input_shape: input_shape.to_vec(),
        output_shape: output_shape.to_vec(),
        mode_matrices,
        tensor_block,
        psi,
        seed,
        preserve_modes: preserve,
        scale_on_apply: false,
    })
}

impl GtrpSpec {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn r(&self) -> usize {
        self.mode_matrices.len()
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn preserve_modes(&self) -> &[usize] {
        &self.preserve_modes
    }

    pub fn mode_matrices(&self) -> &[DMatrix<f64>] {
        &self.mode_matrices
    }

    pub fn tensor_block(&self) -> Option<&DenseTensor> {
        self.tensor_block.as_ref()
    }

    pub fn scale_on_apply(&self) -> bool {
        self.scale_on_apply
    }

    pub fn with_scaling(mut self, on: bool) -> Self {
        self.scale_on_apply = on;
        self
    }

    pub fn design(&self) -> ProjectionDesign {
        ProjectionDesign {
            output_shape: self.output_shape.clone(),
            r: self.r(),
            psi: self.psi,
            preserve_modes: self.preserve_modes.clone(),
        }
    }

    /// Factor applied when scaling is on: `1/√(Π q)` over the output sizes of
    /// every random (non-identity) component. With unit-variance entries this
    /// makes `E‖f(X)‖² = ‖X‖²`.
    pub fn isometry_scale(&self) -> f64 {
        let mut k = 1.0;
        for (m, h) in self.mode_matrices.iter().enumerate() {
            if self.preserve_modes.binary_search(&m).is_err() {
                k *= h.nrows() as f64;
            }
        }
        if self.tensor_block.is_some() {
            k *= self.output_shape[self.r()..].iter().product::<usize>() as f64;
        }
        1.0 / k.sqrt()
    }

    pub fn apply(&self, x: &DenseTensor) -> Result<DenseTensor> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "covariate shape {:?} does not match projection input {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        let mut cur: Option<DenseTensor> = None;
        for (m, h) in self.mode_matrices.iter().enumerate() {
            if self.preserve_modes.binary_search(&m).is_ok() {
                continue;
            }
            let src = cur.as_ref().unwrap_or(x);
            cur = Some(src.mode_product(h, m)?);
        }
        if let Some(block) = &self.tensor_block {
            let src = cur.as_ref().unwrap_or(x);
            let n = self.input_shape.len();
            let out_modes = self.output_shape.len() - self.r();
            cur = Some(src.mode_range_product(block, self.r(), n - 1, out_modes)?);
        }
        let out = cur.unwrap_or_else(|| x.clone());
        Ok(if self.scale_on_apply {
            out.scale(self.isometry_scale())
        } else {
            out
        })
    }

    pub fn apply_all(&self, xs: &[DenseTensor]) -> Result<Vec<DenseTensor>> {
        xs.iter().map(|x| self.apply(x)).collect()
    }

    /// SHA-256 over the realized entries (little-endian `f64`s, mode matrices
    /// in order, then the tensor block).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for m in &self.mode_matrices {
            for v in m.as_slice() {
                h.update(v.to_le_bytes());
            }
        }
        if let Some(b) = &self.tensor_block {
            for v in b.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn manifest(&self) -> SpecManifest {
        SpecManifest {
            input_shape: self.input_shape.clone(),
            output_shape: self.output_shape.clone(),
            r: self.r(),
            psi: self.psi,
            seed: self.seed,
            preserve_modes: self.preserve_modes.clone(),
            scale_on_apply: self.scale_on_apply,
            compression_rate: compression_rate(self),
            content_hash: self.content_hash(),
        }
    }
}

/// Serializable description of a realized projection. Entries are not
/// stored; they are regenerated from the seed and checked against the hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecManifest {
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub r: usize,
    pub psi: f64,
    pub seed: u64,
    pub preserve_modes: Vec<usize>,
    pub scale_on_apply: bool,
    pub compression_rate: f64,
    pub content_hash: String,
}

impl SpecManifest {
    pub fn regenerate(&self) -> Result<GtrpSpec> {
        let spec = build_gtrp(
            &self.input_shape,
            &self.output_shape,
            self.r,
            self.psi,
            self.seed,
            &self.preserve_modes,
        )?
        .with_scaling(self.scale_on_apply);
        let hash = spec.content_hash();
        if hash != self.content_hash {
            return Err(Error::Parameter(format!(
                "regenerated projection hash {hash} does not match recorded {}",
                self.content_hash
            )));
        }
        Ok(spec)
    }
}

/// `r = q(M)/p(N)`.
pub fn compression_rate(spec: &GtrpSpec) -> f64 {
    let q: usize = spec.output_shape.iter().product();
    let p: usize = spec.input_shape.iter().product();
    q as f64 / p as f64
}

fn expect_matrix(x: &DenseTensor, what: &str) -> Result<(usize, usize)> {
    if x.order() != 2 {
        return Err(Error::UnsupportedShape(format!(
            "{what} is defined for 2-mode inputs, got shape {:?}",
            x.shape()
        )));
    }
    Ok((x.shape()[0], x.shape()[1]))
}

/// CP-structured projection of a matrix: entry `i` is
/// `<Σ_d a1_{i,d} ∘ a2_{i,d}, X>` with sparse sign factors. Unscaled.
///
/// For each output entry the factors are drawn as `a1_{i,1}, ..., a1_{i,D}`
/// (each of length `p1`) followed by `a2_{i,1}, ..., a2_{i,D}`.
pub fn apply_cprp(
    x: &DenseTensor,
    rank: usize,
    q: usize,
    psi: f64,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let (p1, p2) = expect_matrix(x, "CP random projection")?;
    if rank == 0 {
        return Err(Error::Parameter("CP projection rank must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(q);
    for _ in 0..q {
        let a1 = sample_projection_entries(p1 * rank, psi, rng)?;
        let a2 = sample_projection_entries(p2 * rank, psi, rng)?;
        let mut s = 0.0;
        for d in 0..rank {
            s += bilinear(x, &a1[d * p1..(d + 1) * p1], &a2[d * p2..(d + 1) * p2]);
        }
        out.push(s);
    }
    Ok(out)
}

/// Tensor-train projection of a matrix with cores `G1_i` (`p1 × D`) and
/// `G2_i` (`D × p2`): entry `i` is `Σ_{j1,j2} (G1_i G2_i)_{j1 j2} X_{j1 j2}`.
/// Unscaled.
///
/// Cores are drawn column-major: `G1_i` with `j1` fastest, then `G2_i` with
/// the rank index fastest.
pub fn apply_ttrp(
    x: &DenseTensor,
    rank: usize,
    q: usize,
    psi: f64,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let (p1, p2) = expect_matrix(x, "TT random projection")?;
    if rank == 0 {
        return Err(Error::Parameter("TT projection rank must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(q);
    for _ in 0..q {
        let g1 = DMatrix::from_vec(p1, rank, sample_projection_entries(p1 * rank, psi, rng)?);
        let g2 = DMatrix::from_vec(rank, p2, sample_projection_entries(rank * p2, psi, rng)?);
        let core = g1 * g2;
        out.push(crate::tensor::dot(core.as_slice(), x.data()));
    }
    Ok(out)
}

fn bilinear(x: &DenseTensor, a1: &[f64], a2: &[f64]) -> f64 {
    let p1 = a1.len();
    let data = x.data();
    a2.iter()
        .enumerate()
        .filter(|(_, &b)| b != 0.0)
        .map(|(j2, &b)| b * crate::tensor::dot(&data[j2 * p1..(j2 + 1) * p1], a1))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;

    fn random_tensor(shape: &[usize], seed: u64) -> DenseTensor {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rng_from_seed(seed);
        DenseTensor::from_fn(shape, |_| StandardNormal.sample(&mut rng)).unwrap()
    }

    #[test]
    fn rademacher_case_never_draws_zero() {
        let mut rng = rng_from_seed(1);
        let e = sample_projection_entries(10_000, 1.0, &mut rng).unwrap();
        assert!(e.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn psi_below_one_is_rejected() {
        let mut rng = rng_from_seed(1);
        assert!(matches!(
            sample_projection_entries(3, 0.5, &mut rng),
            Err(Error::Parameter(_))
        ));
        assert!(sample_projection_entries(3, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn entry_moments_and_zero_frequency() {
        for &psi in &[1.0, 2.0, 3.0, 4.0] {
            let mut rng = rng_from_seed(42 + psi as u64);
            let n = 1_000_000;
            let e = sample_projection_entries(n, psi, &mut rng).unwrap();
            let nf = n as f64;
            let m1 = e.iter().sum::<f64>() / nf;
            let m2 = e.iter().map(|v| v * v).sum::<f64>() / nf;
            let m4 = e.iter().map(|v| v.powi(4)).sum::<f64>() / nf;
            let zeros = e.iter().filter(|&&v| v == 0.0).count() as f64 / nf;
            assert!(m1.abs() < 0.01, "psi {psi}: mean {m1}");
            assert!((m2 - 1.0).abs() < 0.02, "psi {psi}: E r^2 {m2}");
            assert!((m4 / psi - 1.0).abs() < 0.03, "psi {psi}: E r^4 {m4}");
            assert!(
                (zeros - (1.0 - 1.0 / psi)).abs() < 0.002,
                "psi {psi}: P(0) {zeros}"
            );
        }
    }

    #[test]
    fn entry_law_chi_square() {
        // 3 cells, 2 degrees of freedom; the 0.999 quantile is 13.8155.
        let psi = 3.0;
        let n = 100_000;
        let mut rng = rng_from_seed(2024);
        let e = sample_projection_entries(n, psi, &mut rng).unwrap();
        let s = psi.sqrt();
        let obs = [
            e.iter().filter(|&&v| v == s).count() as f64,
            e.iter().filter(|&&v| v == 0.0).count() as f64,
            e.iter().filter(|&&v| v == -s).count() as f64,
        ];
        let probs = [0.5 / psi, 1.0 - 1.0 / psi, 0.5 / psi];
        let chi2: f64 = obs
            .iter()
            .zip(probs)
            .map(|(o, p)| (o - n as f64 * p).powi(2) / (n as f64 * p))
            .sum();
        assert!(chi2 < 13.8155, "chi-square {chi2}");
    }

    #[test]
    fn figure_one_shapes() {
        let tw = build_gtrp(&[20, 60, 50], &[480], 0, 3.0, 1, &[]).unwrap();
        assert_eq!(tw.r(), 0);
        assert_eq!(tw.tensor_block().unwrap().shape(), &[480, 20, 60, 50]);
        let mw = build_gtrp(&[20, 60, 50], &[4, 12, 10], 3, 3.0, 1, &[]).unwrap();
        assert_eq!(mw.r(), 3);
        assert!(mw.tensor_block().is_none());
        assert!((compression_rate(&mw) - 0.008).abs() < 1e-15);
        assert!((compression_rate(&tw) - 0.008).abs() < 1e-15);
        let s = 3f64.sqrt();
        for h in mw.mode_matrices() {
            assert!(h.iter().all(|&v| v == 0.0 || v == s || v == -s));
        }
    }

    #[test]
    fn inconsistent_orders_are_rejected() {
        assert!(build_gtrp(&[4, 4], &[2, 2, 2], 0, 3.0, 0, &[]).is_err());
        assert!(build_gtrp(&[4, 4, 4], &[2, 2], 2, 3.0, 0, &[]).is_err());
        assert!(build_gtrp(&[4, 4], &[2], 2, 3.0, 0, &[]).is_err());
        assert!(build_gtrp(&[4, 4], &[3, 2], 2, 3.0, 0, &[0]).is_err());
        assert!(build_gtrp(&[4, 4], &[4, 2], 2, 3.0, 0, &[0]).is_ok());
    }

    #[test]
    fn compression_rate_examples() {
        let s = build_gtrp(&[20, 20], &[12, 12], 2, 3.0, 0, &[]).unwrap();
        assert!((compression_rate(&s) - 0.36).abs() < 1e-15);
        let id = ProjectionDesign::identity(&[5, 6])
            .build(&[5, 6], 0)
            .unwrap();
        assert_eq!(compression_rate(&id), 1.0);
    }

    #[test]
    fn preserved_mode_matches_example_structure() {
        // Mode 0 preserved on a 3x2 input, mode 1 projected to 1: each row of
        // x is combined by the single row of H2.
        let spec = build_gtrp(&[3, 2], &[3, 1], 2, 1.0, 9, &[0]).unwrap();
        assert_eq!(spec.mode_matrices()[0], DMatrix::identity(3, 3));
        let x = DenseTensor::from_fn(&[3, 2], |i| (i[0] * 2 + i[1]) as f64 + 1.0).unwrap();
        let y = spec.apply(&x).unwrap();
        let h2 = &spec.mode_matrices()[1];
        for i in 0..3 {
            let expect = h2[(0, 0)] * x.get(&[i, 0]) + h2[(0, 1)] * x.get(&[i, 1]);
            assert_eq!(y.get(&[i, 0]), expect);
        }
    }

    #[test]
    fn identity_projection_is_identity() {
        let x = random_tensor(&[3, 4, 2], 5);
        let id = ProjectionDesign::identity(&[3, 4, 2])
            .build(&[3, 4, 2], 0)
            .unwrap();
        assert_eq!(id.apply(&x).unwrap(), x);
        assert_eq!(id.clone().with_scaling(true).apply(&x).unwrap(), x);
    }

    #[test]
    fn modewise_equals_successive_mode_products() {
        let x = random_tensor(&[6, 5, 4], 3);
        let spec = build_gtrp(&[6, 5, 4], &[3, 2, 2], 3, 3.0, 77, &[]).unwrap();
        let mut y = x.clone();
        for (m, h) in spec.mode_matrices().iter().enumerate() {
            y = y.mode_product(h, m).unwrap();
        }
        let got = spec.apply(&x).unwrap();
        for (a, b) in got.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn tensorwise_equals_vec_times_matricized_block() {
        let x = random_tensor(&[4, 3, 5], 8);
        let spec = build_gtrp(&[4, 3, 5], &[7], 0, 3.0, 13, &[]).unwrap();
        let block = spec.tensor_block().unwrap();
        // Rows of the unfolding enumerate the input modes; one column per output.
        let mat = block.matricize(&[1, 2, 3]).unwrap();
        let v = nalgebra::DVector::from_column_slice(x.vectorize());
        let expect = mat.transpose() * v;
        let got = spec.apply(&x).unwrap();
        assert_eq!(got.shape(), &[7]);
        for (a, b) in got.data().iter().zip(expect.iter()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn mixed_projection_shape() {
        let spec = build_gtrp(&[5, 4, 3, 2], &[2, 3, 2], 1, 3.0, 4, &[]).unwrap();
        assert_eq!(spec.tensor_block().unwrap().shape(), &[3, 2, 4, 3, 2]);
        let y = spec.apply(&random_tensor(&[5, 4, 3, 2], 1)).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2]);
        assert!(spec.apply(&random_tensor(&[5, 4, 3], 1)).is_err());
    }

    #[test]
    fn same_seed_same_projection() {
        let a = build_gtrp(&[8, 8], &[3, 3], 2, 3.0, 99, &[]).unwrap();
        let b = build_gtrp(&[8, 8], &[3, 3], 2, 3.0, 99, &[]).unwrap();
        let c = build_gtrp(&[8, 8], &[3, 3], 2, 3.0, 100, &[]).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
        let x = random_tensor(&[8, 8], 2);
        assert_eq!(a.apply(&x).unwrap(), b.apply(&x).unwrap());
    }

    #[test]
    fn manifest_round_trip_regenerates_entries() {
        let spec = build_gtrp(&[6, 5], &[6, 2], 2, 3.0, 31, &[0]).unwrap();
        let json = serde_json::to_string(&spec.manifest()).unwrap();
        let back: SpecManifest = serde_json::from_str(&json).unwrap();
        let regen = back.regenerate().unwrap();
        assert_eq!(regen.content_hash(), spec.content_hash());
        let mut tampered = back.clone();
        tampered.seed += 1;
        assert!(tampered.regenerate().is_err());
    }

    #[test]
    fn cprp_and_ttrp_reject_non_matrices_and_map_zero_to_zero() {
        let mut rng = rng_from_seed(0);
        let x3 = DenseTensor::zeros(&[2, 2, 2]).unwrap();
        assert!(matches!(
            apply_cprp(&x3, 1, 3, 3.0, &mut rng),
            Err(Error::UnsupportedShape(_))
        ));
        assert!(matches!(
            apply_ttrp(&x3, 1, 3, 3.0, &mut rng),
            Err(Error::UnsupportedShape(_))
        ));
        let z = DenseTensor::zeros(&[3, 4]).unwrap();
        assert_eq!(apply_cprp(&z, 2, 5, 3.0, &mut rng).unwrap(), vec![0.0; 5]);
        assert_eq!(apply_ttrp(&z, 2, 5, 3.0, &mut rng).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn ttrp_rank_one_equals_cprp_rank_one_under_shared_seed() {
        let x = random_tensor(&[5, 4], 6);
        let a = apply_cprp(&x, 1, 20, 3.0, &mut stream_rng(3, Stream::Fixture(0))).unwrap();
        let b = apply_ttrp(&x, 1, 20, 3.0, &mut stream_rng(3, Stream::Fixture(0))).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn cprp_rank_one_matches_rank_one_gtrp_moments() {
        // A (1,1)-output mode-wise projection is a single rank-one row.
        let x = random_tensor(&[4, 3], 12);
        let draws = 100_000;
        let mut rng = stream_rng(5, Stream::Fixture(1));
        let cp = apply_cprp(&x, 1, draws, 3.0, &mut rng).unwrap();
        let gt: Vec<f64> = (0..draws as u64)
            .map(|s| {
                build_gtrp(&[4, 3], &[1, 1], 2, 3.0, s, &[])
                    .unwrap()
                    .apply(&x)
                    .unwrap()
                    .data()[0]
            })
            .collect();
        let moments = |v: &[f64]| {
            let n = v.len() as f64;
            (
                v.iter().sum::<f64>() / n,
                v.iter().map(|a| a * a).sum::<f64>() / n,
            )
        };
        let (m1a, m2a) = moments(&cp);
        let (m1b, m2b) = moments(&gt);
        let norm2 = x.frobenius_norm().powi(2);
        // Second moment of a rank-one row is ‖X‖²; both estimates within 3%.
        assert!((m2a / norm2 - 1.0).abs() < 0.03, "cprp {m2a} vs {norm2}");
        assert!((m2b / norm2 - 1.0).abs() < 0.03, "gtrp {m2b} vs {norm2}");
        assert!((m2a / m2b - 1.0).abs() < 0.03);
        let sd = norm2.sqrt() / (draws as f64).sqrt();
        assert!(m1a.abs() < 4.0 * sd && m1b.abs() < 4.0 * sd);
    }

    proptest! {
        #[test]
        fn apply_is_linear(seed in 0u64..500, a in -3.0f64..3.0, b in -3.0f64..3.0, tw in any::<bool>()) {
            let shape = [4, 3, 3];
            let spec = if tw {
                build_gtrp(&shape, &[5], 0, 3.0, seed, &[]).unwrap()
            } else {
                build_gtrp(&shape, &[2, 2, 2], 3, 3.0, seed, &[]).unwrap()
            };
            let u = random_tensor(&shape, seed + 1);
            let v = random_tensor(&shape, seed + 2);
            let lhs = spec.apply(&u.scale(a).add(&v.scale(b)).unwrap()).unwrap();
            let rhs = spec.apply(&u).unwrap().scale(a).add(&spec.apply(&v).unwrap().scale(b)).unwrap();
            for (x, y) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs().max(y.abs())));
            }
        }
    }
}
