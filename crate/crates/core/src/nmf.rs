//! Non-negative matrix factorization `V ≈ W·H` under the generalized
//! Kullback-Leibler divergence, solved with multiplicative updates.
//!
//! `W` (m × r) holds one spectral basis per column, `H` (r × n) one
//! activation row per latent component.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmfConfig {
    pub rank: usize,
    pub max_iters: usize,
    /// Stop once one iteration improves the divergence by less than this fraction.
    pub rel_tol: f64,
    /// Floor for denominators and for `WH` inside logarithms.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        Self { rank: 4, max_iters: 500, rel_tol: 1e-5, epsilon: DEFAULT_EPSILON, seed: 0 }
    }
}

impl NmfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidConfig("rank must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::InvalidConfig("rel_tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfModel<T> {
    /// Mixing matrix, m × r.
    pub w: Array2<T>,
    /// Source matrix, r × n.
    pub h: Array2<T>,
    pub rank: usize,
    /// Divergence before the first update, then after every update.
    pub divergence_trace: Vec<T>,
    pub seed: u64,
}

impl<T: Scalar> NmfModel<T> {
    pub fn reconstruction(&self) -> Array2<T> {
        self.w.dot(&self.h)
    }

    /// Contribution of component `k` alone: the outer product of column `k`
    /// of `W` and row `k` of `H`.
    pub fn component(&self, k: usize) -> Array2<T> {
        let col = self.w.column(k).insert_axis(Axis(1));
        let row = self.h.row(k).insert_axis(Axis(0));
        col.dot(&row)
    }

    pub fn iterations(&self) -> usize {
        self.divergence_trace.len().saturating_sub(1)
    }

    pub fn final_divergence(&self) -> Option<T> {
        self.divergence_trace.last().copied()
    }

    pub fn to_document(&self) -> NmfModelDocument {
        let rows = |a: &Array2<T>| a.rows().into_iter().map(|r| r.iter().map(|x| x.as_f64()).collect()).collect();
        NmfModelDocument {
            rank: self.rank,
            seed: self.seed,
            w: rows(&self.w),
            h: rows(&self.h),
            divergence_trace: self.divergence_trace.iter().map(|x| x.as_f64()).collect(),
        }
    }

    pub fn from_document(doc: &NmfModelDocument) -> Result<Self> {
        let matrix = |rows: &[Vec<f64>], name: &str| -> Result<Array2<T>> {
            let ncols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != ncols) {
                return Err(Error::ShapeMismatch(format!("ragged rows in {name}")));
            }
            let flat = rows.iter().flatten().map(|&x| T::of(x)).collect();
            Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| Error::ShapeMismatch(e.to_string()))
        };
        let w = matrix(&doc.w, "W")?;
        let h = matrix(&doc.h, "H")?;
        if w.ncols() != doc.rank || h.nrows() != doc.rank {
            return Err(Error::ShapeMismatch(format!(
                "W {:?} and H {:?} do not have rank {}",
                w.dim(),
                h.dim(),
                doc.rank
            )));
        }
        if w.iter().chain(h.iter()).any(|x| !x.is_finite() || *x < T::zero()) {
            return Err(Error::InvalidConfig("factors must be finite and non-negative".into()));
        }
        Ok(Self {
            w,
            h,
            rank: doc.rank,
            divergence_trace: doc.divergence_trace.iter().map(|&x| T::of(x)).collect(),
            seed: doc.seed,
        })
    }
}

/// JSON form of an [`NmfModel`]: factors as row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NmfModelDocument {
    pub rank: usize,
    pub seed: u64,
    pub w: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub divergence_trace: Vec<f64>,
}

/// Seeded factors drawn uniformly from (0, 1]. When `target_mean` is given
/// both factors are scaled by the same factor so that `mean(W·H)` matches it.
pub fn init_factors<T: Scalar>(
    m: usize,
    n: usize,
    config: &NmfConfig,
    target_mean: Option<T>,
) -> (Array2<T>, Array2<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let r = config.rank;
    // gen() is in [0, 1); flip it onto (0, 1]
    let mut draw = |_| T::of(1.0 - rng.gen::<f64>());
    let mut w = Array2::from_shape_fn((m, r), &mut draw);
    let mut h = Array2::from_shape_fn((r, n), &mut draw);
    if let Some(target) = target_mean {
        let current = w.dot(&h).mean().unwrap_or_else(T::one);
        if target > T::zero() && current > T::zero() {
            let s = (target / current).sqrt();
            w.mapv_inplace(|x| x * s);
            h.mapv_inplace(|x| x * s);
        }
    }
    (w, h)
}

fn check_shapes<T>(v: &Array2<T>, w: &Array2<T>, h: &Array2<T>) -> Result<()> {
    if w.nrows() != v.nrows() || h.ncols() != v.ncols() || w.ncols() != h.nrows() {
        return Err(Error::ShapeMismatch(format!("V {:?} vs W {:?} · H {:?}", v.dim(), w.dim(), h.dim())));
    }
    Ok(())
}

/// Generalized KL divergence `Σ v·ln(v/wh) − v + wh` with `0·ln 0 = 0` and
/// `wh` floored at `epsilon`.
pub fn kl_divergence_with_floor<T: Scalar>(v: &Array2<T>, w: &Array2<T>, h: &Array2<T>, epsilon: T) -> Result<T> {
    check_shapes(v, w, h)?;
    Ok(divergence_of(v, &w.dot(h), epsilon))
}

pub fn kl_divergence<T: Scalar>(v: &Array2<T>, w: &Array2<T>, h: &Array2<T>) -> Result<T> {
    kl_divergence_with_floor(v, w, h, T::of(DEFAULT_EPSILON))
}

fn divergence_of<T: Scalar>(v: &Array2<T>, wh: &Array2<T>, epsilon: T) -> T {
    let mut total = T::zero();
    Zip::from(v).and(wh).for_each(|&x, &y| {
        let y = y.max(epsilon);
        total = total + if x > T::zero() { x * (x / y).ln() - x + y } else { y };
    });
    total.max(T::zero())
}

/// One multiplicative update: `H` first, then `W` against the new `H`.
///
/// `H ← H ⊙ Wᵀ(V ⊘ WH) ⊘ Wᵀ1` and `W ← W ⊙ (V ⊘ WH)Hᵀ ⊘ 1Hᵀ`, with every
/// denominator and `WH` floored at `epsilon`.
pub fn mu_step<T: Scalar>(v: &Array2<T>, w: &Array2<T>, h: &Array2<T>, epsilon: T) -> Result<(Array2<T>, Array2<T>)> {
    check_shapes(v, w, h)?;
    let ratio = |wh: Array2<T>| Zip::from(v).and(&wh).map_collect(|&x, &y| x / y.max(epsilon));

    let q = ratio(w.dot(h));
    let numer_h = w.t().dot(&q);
    let w_colsum: Array1<T> = w.sum_axis(Axis(0)).mapv(|s| s.max(epsilon));
    let mut h_new = h.clone();
    Zip::indexed(&mut h_new).and(&numer_h).for_each(|(k, _), x, &num| {
        *x = *x * num / w_colsum[k];
    });

    let q = ratio(w.dot(&h_new));
    let numer_w = q.dot(&h_new.t());
    let h_rowsum: Array1<T> = h_new.sum_axis(Axis(1)).mapv(|s| s.max(epsilon));
    let mut w_new = w.clone();
    Zip::indexed(&mut w_new).and(&numer_w).for_each(|(_, k), x, &num| {
        *x = *x * num / h_rowsum[k];
    });

    Ok((w_new, h_new))
}

/// Runs seeded initialization then [`mu_step`] until `max_iters` or until the
/// relative improvement over one iteration drops below `rel_tol`.
pub fn factorize<T: Scalar>(v: &Array2<T>, config: &NmfConfig) -> Result<NmfModel<T>> {
    config.validate()?;
    if v.is_empty() {
        return Err(Error::ShapeMismatch(format!("empty input {:?}", v.dim())));
    }
    if v.iter().any(|x| !x.is_finite() || *x < T::zero()) {
        return Err(Error::InvalidConfig("input must be finite and non-negative".into()));
    }
    if !v.iter().any(|&x| x > T::zero()) {
        return Err(Error::EmptyInput);
    }
    let eps = T::of(config.epsilon);
    let rel_tol = T::of(config.rel_tol);
    let (mut w, mut h) = init_factors(v.nrows(), v.ncols(), config, v.mean());

    let mut trace = Vec::with_capacity(config.max_iters + 1);
    trace.push(divergence_of(v, &w.dot(&h), eps));
    for _ in 0..config.max_iters {
        let (w_next, h_next) = mu_step(v, &w, &h, eps)?;
        w = w_next;
        h = h_next;
        let d = divergence_of(v, &w.dot(&h), eps);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(d);
        if d == T::zero() || (prev > T::zero() && (prev - d) / prev < rel_tol) {
            break;
        }
    }
    Ok(NmfModel { w, h, rank: config.rank, divergence_trace: trace, seed: config.seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_matrix(m: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((m, n), |_| rng.gen::<f64>())
    }

    #[test]
    fn divergence_scalar_cases() {
        let one = array![[1.0f64]];
        let d = kl_divergence(&array![[2.0]], &one, &one).unwrap();
        assert!((d - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-12);
        assert!((d - 0.386294).abs() < 1e-6);

        let d = kl_divergence(&array![[0.0]], &one, &one).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn divergence_is_zero_at_exact_product() {
        let w = random_matrix(6, 2, 1);
        let h = random_matrix(2, 5, 2);
        let v = w.dot(&h);
        assert!(kl_divergence(&v, &w, &h).unwrap() < 1e-12);
    }

    #[test]
    fn divergence_shape_mismatch() {
        let err = kl_divergence(&Array2::<f64>::ones((3, 3)), &Array2::ones((3, 2)), &Array2::ones((3, 3)));
        assert!(matches!(err, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn mu_step_one_by_one() {
        let (w, h) = mu_step(&array![[4.0f64]], &array![[2.0]], &array![[1.0]], 1e-12).unwrap();
        assert_eq!(h, array![[2.0]]);
        assert_eq!(w, array![[2.0]]);
    }

    #[test]
    fn mu_step_fixed_point() {
        let v = Array2::<f64>::ones((2, 2));
        let w = array![[1.0], [1.0]];
        let h = array![[1.0, 1.0]];
        let (w2, h2) = mu_step(&v, &w, &h, 1e-12).unwrap();
        assert_eq!(w2, w);
        assert_eq!(h2, h);
    }

    #[test]
    fn mu_step_does_not_increase_divergence() {
        let v = random_matrix(20, 30, 5);
        let config = NmfConfig { rank: 4, seed: 9, ..Default::default() };
        let (w, h) = init_factors(20, 30, &config, v.mean());
        let before = kl_divergence(&v, &w, &h).unwrap();
        let (w2, h2) = mu_step(&v, &w, &h, 1e-12).unwrap();
        let after = kl_divergence(&v, &w2, &h2).unwrap();
        assert!(after <= before + 1e-9, "{after} > {before}");
    }

    #[test]
    fn init_shapes_and_determinism() {
        let config = NmfConfig { rank: 3, seed: 42, ..Default::default() };
        let (w, h) = init_factors::<f64>(5, 7, &config, None);
        assert_eq!(w.dim(), (5, 3));
        assert_eq!(h.dim(), (3, 7));
        let (w2, h2) = init_factors::<f64>(5, 7, &config, None);
        assert_eq!(w, w2);
        assert_eq!(h, h2);
    }

    #[test]
    fn init_matches_target_mean() {
        let config = NmfConfig { rank: 2, seed: 1, ..Default::default() };
        let (w, h) = init_factors::<f64>(10, 12, &config, Some(37.5));
        assert!((w.dot(&h).mean().unwrap() - 37.5).abs() < 1e-9);
    }

    #[test]
    fn init_draws_are_strictly_positive() {
        let mut min = f64::INFINITY;
        for seed in 0..10 {
            let config = NmfConfig { rank: 100, seed, ..Default::default() };
            let (w, h) = init_factors::<f64>(500, 500, &config, None);
            min = w.iter().chain(h.iter()).cloned().fold(min, f64::min);
        }
        assert!(min > 0.0);
    }

    #[test]
    fn rank_one_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let u = Array2::from_shape_fn((10, 1), |_| 0.1 + rng.gen::<f64>());
        let v = Array2::from_shape_fn((1, 15), |_| 0.1 + rng.gen::<f64>());
        let target = u.dot(&v);
        let config = NmfConfig { rank: 1, max_iters: 500, rel_tol: 0.0, ..Default::default() };
        let model = factorize(&target, &config).unwrap();
        let d = model.final_divergence().unwrap();
        assert!(d / target.sum() < 1e-6);
    }

    #[test]
    fn all_zero_input_is_empty() {
        let err = factorize(&Array2::<f64>::zeros((4, 4)), &NmfConfig::default());
        assert!(matches!(err, Err(Error::EmptyInput)));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let v = Array2::<f64>::ones((3, 3));
        for bad in [
            NmfConfig { rank: 0, ..Default::default() },
            NmfConfig { max_iters: 0, ..Default::default() },
            NmfConfig { epsilon: 0.0, ..Default::default() },
        ] {
            assert!(matches!(factorize(&v, &bad), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn trace_is_monotone_on_random_input() {
        let v = random_matrix(50, 100, 3);
        let config = NmfConfig { rank: 4, max_iters: 200, rel_tol: 0.0, seed: 3, ..Default::default() };
        let model = factorize(&v, &config).unwrap();
        assert_eq!(model.divergence_trace.len(), 201);
        for pair in model.divergence_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9);
        }
    }

    #[test]
    fn rel_tol_stops_early() {
        let v = random_matrix(20, 20, 8);
        let config = NmfConfig { rank: 2, max_iters: 10_000, rel_tol: 1e-3, ..Default::default() };
        let model = factorize(&v, &config).unwrap();
        assert!(model.iterations() < 10_000);
    }

    #[test]
    fn factorize_is_bit_deterministic() {
        let v = random_matrix(15, 25, 4);
        let config = NmfConfig { rank: 3, max_iters: 50, seed: 11, ..Default::default() };
        assert_eq!(factorize(&v, &config).unwrap(), factorize(&v, &config).unwrap());
    }

    #[test]
    fn f32_factorization_runs() {
        let v = random_matrix(12, 18, 6).mapv(|x| x as f32);
        let config = NmfConfig { rank: 2, max_iters: 100, ..Default::default() };
        let model = factorize(&v, &config).unwrap();
        assert!(model.w.iter().chain(model.h.iter()).all(|&x| x >= 0.0 && x.is_finite()));
        let t = &model.divergence_trace;
        assert!(t.last().unwrap() < &t[0]);
    }

    #[test]
    fn document_round_trip() {
        let v = random_matrix(4, 6, 2);
        let model = factorize(&v, &NmfConfig { rank: 2, max_iters: 5, ..Default::default() }).unwrap();
        let json = serde_json::to_string(&model.to_document()).unwrap();
        let doc: NmfModelDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(NmfModel::<f64>::from_document(&doc).unwrap(), model);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn updates_stay_non_negative(seed in 0u64..10_000, steps in 1usize..20) {
                let v = random_matrix(8, 9, seed).mapv(|x| if x < 0.3 { 0.0 } else { x });
                let config = NmfConfig { rank: 3, seed, ..Default::default() };
                let (mut w, mut h) = init_factors(8, 9, &config, None);
                for _ in 0..steps {
                    let before = kl_divergence(&v, &w, &h).unwrap();
                    (w, h) = mu_step(&v, &w, &h, 1e-12).unwrap();
                    prop_assert!(kl_divergence(&v, &w, &h).unwrap() <= before + 1e-9);
                }
                prop_assert!(w.iter().chain(h.iter()).all(|&x| x >= 0.0 && x.is_finite()));
            }

            #[test]
            fn divergence_is_scale_invariant(
                seed in 0u64..10_000,
                scales in proptest::collection::vec(0.01f64..100.0, 3),
            ) {
                let v = random_matrix(7, 11, seed);
                let w = random_matrix(7, 3, seed + 1);
                let h = random_matrix(3, 11, seed + 2);
                let d = Array1::from(scales);
                let wd = &w * &d.view().insert_axis(Axis(0));
                let dh = &h / &d.view().insert_axis(Axis(1));
                let a = kl_divergence(&v, &w, &h).unwrap();
                let b = kl_divergence(&v, &wd, &dh).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-300));
            }
        }
    }
}
