//! Schmidt decomposition `Φ(q_s, q_i) = Σ_n √λ_n u_n(q_s) v_n(q_i)`.
//!
//! Modes are continuum-normalized (`Σ |u_n|² Δq² = 1`). The global phase of
//! each signal mode is fixed so that its first largest-magnitude momentum
//! sample (storage order) is real and positive; the idler mode absorbs the
//! conjugate phase so the product `u_n v_n` is unchanged.
//!
//! Three storage forms share one interface: dense fields from a full-kernel
//! SVD, products of one-axis modes for the separable Gaussian kernel, and
//! analytic Hermite-Gauss/Laguerre-Gauss modes for the closed-form Gaussian
//! spectrum.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::biphoton::{gaussian_spectrum_ratio, BiphotonAmplitude, PumpCrystalSpec, Representation};
use crate::error::{Error, Result};
use crate::grid::{transform_axis, ComplexField, Direction, Space, TransverseGrid};
use crate::linalg::{singular_triples, symmetric_triples, SingularTriples};
use crate::modes::{mode_field, mode_indices, ModeFamily, ModeSet, ModeSpec};

/// One-axis Schmidt modes. Momentum vectors are continuum-normalized on
/// the axis (`Σ |u|² Δq = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct AxisModes {
    pub weights: Vec<f64>,
    pub signal_q: Vec<Vec<Complex64>>,
    pub idler_q: Vec<Vec<Complex64>>,
    pub signal_r: Vec<Vec<Complex64>>,
    pub idler_r: Vec<Vec<Complex64>>,
}

impl AxisModes {
    /// Builds the real-space functions from momentum-space ones.
    pub fn from_momentum(
        grid: &TransverseGrid,
        weights: Vec<f64>,
        signal_q: Vec<Vec<Complex64>>,
        idler_q: Vec<Vec<Complex64>>,
    ) -> Self {
        let to_r = |v: &Vec<Vec<Complex64>>| {
            v.iter()
                .map(|u| transform_axis(u, grid, Direction::Inverse))
                .collect::<Vec<_>>()
        };
        let signal_r = to_r(&signal_q);
        let idler_r = to_r(&idler_q);
        Self {
            weights,
            signal_q,
            idler_q,
            signal_r,
            idler_r,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModeStorage {
    Dense {
        signal_q: Vec<ComplexField>,
        idler_q: Vec<ComplexField>,
        signal_r: Vec<ComplexField>,
        idler_r: Vec<ComplexField>,
    },
    /// Mode `n` is `x.signal(pairs[n].0) ⊗ y.signal(pairs[n].1)`.
    Separable {
        x: AxisModes,
        y: AxisModes,
        pairs: Vec<(usize, usize)>,
    },
    /// Signal mode `n` is `specs[n]`; the idler is `v_n(q) = idler_signs[n] · conj(u_n(q))`.
    Analytic {
        specs: Vec<ModeSpec>,
        idler_signs: Vec<f64>,
    },
}

/// Identifies the mode ordering a coupling matrix was computed in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisManifest {
    pub id: String,
    pub labels: Vec<String>,
}

impl BasisManifest {
    pub fn line(&self) -> String {
        format!("{} [{}]", self.id, self.labels.join(" "))
    }

    pub fn is_prefix_of(&self, other: &BasisManifest) -> bool {
        self.id == other.id
            && self.labels.len() <= other.labels.len()
            && self.labels[..] == other.labels[..self.labels.len()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtDecomposition {
    grid: TransverseGrid,
    source: String,
    weights: Vec<f64>,
    tail_mass: f64,
    regime_sign: i8,
    storage: ModeStorage,
}

fn fix_phase(u: &mut [Complex64], v: &mut [Complex64]) {
    let max = u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let Some(anchor) = u.iter().find(|z| z.norm() >= (1.0 - 1e-9) * max) else {
        return;
    };
    let phase = anchor / anchor.norm();
    let conj = phase.conj();
    u.iter_mut().for_each(|z| *z *= conj);
    v.iter_mut().for_each(|z| *z *= phase);
}

/// Normalized weights and phase-fixed, continuum-normalized vectors.
fn normalized_triples(t: SingularTriples, step: f64) -> (Vec<f64>, Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
    let total: f64 = t.values.iter().map(|s| s * s).sum();
    let weights = t.values.iter().map(|s| s * s / total).collect();
    let scale = 1.0 / step;
    let mut left = t.left;
    let mut right = t.right;
    for (u, v) in left.iter_mut().zip(right.iter_mut()) {
        u.iter_mut().for_each(|z| *z *= scale);
        v.iter_mut().for_each(|z| *z *= scale);
        fix_phase(u, v);
    }
    (weights, left, right)
}

fn validate_rank(rank: usize, grid: &TransverseGrid) -> Result<()> {
    if rank == 0 {
        return Err(Error::InvalidParameter("rank must be at least 1".into()));
    }
    if rank > grid.len() {
        return Err(Error::InvalidParameter(format!(
            "rank {rank} exceeds the {} available modes",
            grid.len()
        )));
    }
    Ok(())
}

/// Splits normalized weights into the kept prefix (renormalized) and the tail mass.
fn keep_prefix(all: &[f64], rank: usize) -> (Vec<f64>, f64) {
    let tail: f64 = all[rank..].iter().sum();
    let kept_total: f64 = all[..rank].iter().sum();
    (all[..rank].iter().map(|w| w / kept_total).collect(), tail)
}

/// All axis-index pairs ordered by product weight, descending. Exact ties
/// keep `(a, b)` lexicographic order.
pub fn order_pairs(wx: &[f64], wy: &[f64]) -> Vec<(f64, usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(wx.len() * wy.len());
    for (a, &la) in wx.iter().enumerate() {
        for (b, &lb) in wy.iter().enumerate() {
            pairs.push((la * lb, a, b));
        }
    }
    pairs.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    pairs
}

/// Decomposes `amp`, keeping the `rank` strongest modes. Kept weights are
/// renormalized to sum to one; the discarded mass is reported by
/// [`SchmidtDecomposition::tail_mass`].
pub fn schmidt_decompose(amp: &BiphotonAmplitude, rank: usize) -> Result<SchmidtDecomposition> {
    let grid = *amp.grid();
    validate_rank(rank, &grid)?;
    let spec = amp.spec();
    let dq = grid.momentum_step();
    let n = grid.samples_per_axis();
    match amp.representation() {
        Representation::FullKernel(m) => {
            let (all, left, right) = normalized_triples(singular_triples(m)?, dq);
            let (weights, tail_mass) = keep_prefix(&all, rank);
            let to_fields = |vs: Vec<Vec<Complex64>>| {
                vs.into_iter()
                    .take(rank)
                    .map(|v| ComplexField::new(grid, Space::Momentum, v))
                    .collect::<Result<Vec<_>>>()
            };
            let signal_q = to_fields(left)?;
            let idler_q = to_fields(right)?;
            let to_real = |fs: &[ComplexField]| {
                fs.par_iter().map(|f| f.to_real()).collect::<Result<Vec<_>>>()
            };
            let signal_r = to_real(&signal_q)?;
            let idler_r = to_real(&idler_q)?;
            Ok(SchmidtDecomposition {
                grid,
                source: format!("svd:{}:sigma_pL={}", spec.model.name(), spec.product()),
                weights,
                tail_mass,
                regime_sign: spec.regime_sign(),
                storage: ModeStorage::Dense {
                    signal_q,
                    idler_q,
                    signal_r,
                    idler_r,
                },
            })
        }
        Representation::Separable { x, y } => {
            let axis = |k: &DMatrix<f64>| -> Result<AxisModes> {
                let (w, u, v) = normalized_triples(symmetric_triples(k)?, dq.sqrt());
                Ok(AxisModes::from_momentum(&grid, w, u, v))
            };
            let ax = axis(x)?;
            let ay = if x == y { ax.clone() } else { axis(y)? };
            debug_assert_eq!(ax.len(), n);
            let ordered = order_pairs(&ax.weights, &ay.weights);
            let all: Vec<f64> = ordered.iter().map(|p| p.0).collect();
            let (weights, tail_mass) = keep_prefix(&all, rank);
            let pairs = ordered[..rank].iter().map(|p| (p.1, p.2)).collect();
            Ok(SchmidtDecomposition {
                grid,
                source: format!("svd-separable:{}:sigma_pL={}", spec.model.name(), spec.product()),
                weights,
                tail_mass,
                regime_sign: spec.regime_sign(),
                storage: ModeStorage::Separable { x: ax, y: ay, pairs },
            })
        }
    }
}

/// Closed-form decomposition of the double-Gaussian amplitude in a
/// Hermite-Gauss or Laguerre-Gauss basis, truncated at `max_total_order`.
///
/// Weights are `(1-μ)² μ^n` for total order `n`, with `μ` the per-axis ratio.
/// The momentum waist is `sqrt(2σ_p/L)`. For `σ_p L < 1` the idler mode of
/// order `n` carries an extra `(-1)^n`.
pub fn gaussian_schmidt_analytic(
    spec: &PumpCrystalSpec,
    family: ModeFamily,
    max_total_order: u32,
    grid: &TransverseGrid,
) -> Result<SchmidtDecomposition> {
    let r = spec.product();
    let mu = gaussian_spectrum_ratio(r);
    let momentum_waist = (2.0 * spec.sigma_p / spec.crystal_l).sqrt();
    let waist = 2.0 / momentum_waist;
    let mut specs = Vec::new();
    let mut raw = Vec::new();
    let mut signs = Vec::new();
    for (a, b) in mode_indices(family, max_total_order) {
        let s = ModeSpec::new(family, a, b, waist)?;
        let order = s.total_order();
        raw.push((1.0 - mu).powi(2) * mu.powi(order as i32));
        signs.push(if r < 1.0 && order % 2 == 1 { -1.0 } else { 1.0 });
        specs.push(s);
    }
    let kept: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / kept).collect();
    Ok(SchmidtDecomposition {
        grid: *grid,
        source: format!(
            "analytic:{}:sigma_pL={r}:order={max_total_order}",
            family.name()
        ),
        weights,
        tail_mass: (1.0 - kept).max(0.0),
        regime_sign: spec.regime_sign(),
        storage: ModeStorage::Analytic {
            specs,
            idler_signs: signs,
        },
    })
}

impl SchmidtDecomposition {
    /// Reassembles a decomposition from stored parts.
    pub fn from_parts(
        grid: TransverseGrid,
        source: String,
        weights: Vec<f64>,
        tail_mass: f64,
        regime_sign: i8,
        storage: ModeStorage,
    ) -> Result<Self> {
        let count = match &storage {
            ModeStorage::Dense { signal_q, idler_q, signal_r, idler_r } => {
                if idler_q.len() != signal_q.len()
                    || signal_r.len() != signal_q.len()
                    || idler_r.len() != signal_q.len()
                {
                    return Err(Error::InvalidParameter("mode lists differ in length".into()));
                }
                signal_q.len()
            }
            ModeStorage::Separable { x, y, pairs } => {
                if pairs.iter().any(|&(a, b)| a >= x.len() || b >= y.len()) {
                    return Err(Error::InvalidParameter("pair index out of range".into()));
                }
                pairs.len()
            }
            ModeStorage::Analytic { specs, idler_signs } => {
                if specs.len() != idler_signs.len() {
                    return Err(Error::InvalidParameter("mode lists differ in length".into()));
                }
                specs.len()
            }
        };
        if count != weights.len() || count == 0 {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {count} modes",
                weights.len()
            )));
        }
        if regime_sign != 1 && regime_sign != -1 {
            return Err(Error::InvalidParameter(format!("regime sign must be ±1, got {regime_sign}")));
        }
        Ok(Self {
            grid,
            source,
            weights,
            tail_mass,
            regime_sign,
            storage,
        })
    }

    pub fn grid(&self) -> &TransverseGrid {
        &self.grid
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    /// `λ_n`, non-increasing, summing to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight discarded by truncation, relative to the full decomposition.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// `ρ̄ = s ρ_det` between sample-frame and detector-frame idler
    /// coordinates: `-1` when `σ_p L > 1`.
    pub fn regime_sign(&self) -> i8 {
        self.regime_sign
    }

    pub fn with_regime_sign(&self, sign: i8) -> Result<Self> {
        if sign != 1 && sign != -1 {
            return Err(Error::InvalidParameter(format!("regime sign must be ±1, got {sign}")));
        }
        Ok(Self {
            regime_sign: sign,
            ..self.clone()
        })
    }

    pub fn storage(&self) -> &ModeStorage {
        &self.storage
    }

    pub fn labels(&self) -> Vec<String> {
        match &self.storage {
            ModeStorage::Dense { .. } => (0..self.rank()).map(|n| format!("s{n}")).collect(),
            ModeStorage::Separable { pairs, .. } => {
                pairs.iter().map(|(a, b)| format!("S({a},{b})")).collect()
            }
            ModeStorage::Analytic { specs, .. } => specs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn basis(&self) -> BasisManifest {
        BasisManifest {
            id: format!(
                "{};N={};h={}",
                self.source,
                self.grid.samples_per_axis(),
                self.grid.half_extent()
            ),
            labels: self.labels(),
        }
    }

    /// `(n_x, n_y)`-style axis indices of each mode, when the basis has them.
    pub fn axis_indices(&self) -> Option<Vec<(usize, usize)>> {
        match &self.storage {
            ModeStorage::Separable { pairs, .. } => Some(pairs.clone()),
            ModeStorage::Analytic { specs, .. }
                if specs.iter().all(|s| s.family == ModeFamily::HermiteGauss) =>
            {
                Some(
                    specs
                        .iter()
                        .map(|s| (s.index_a as usize, s.index_b as usize))
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// The leading `rank` modes, weights renormalized.
    pub fn truncated(&self, rank: usize) -> Result<Self> {
        if rank == 0 || rank > self.rank() {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate rank {} to {rank}",
                self.rank()
            )));
        }
        let kept: f64 = self.weights[..rank].iter().sum();
        let weights = self.weights[..rank].iter().map(|w| w / kept).collect();
        let tail_mass = self.tail_mass + (1.0 - self.tail_mass) * (1.0 - kept);
        let storage = match &self.storage {
            ModeStorage::Dense { signal_q, idler_q, signal_r, idler_r } => ModeStorage::Dense {
                signal_q: signal_q[..rank].to_vec(),
                idler_q: idler_q[..rank].to_vec(),
                signal_r: signal_r[..rank].to_vec(),
                idler_r: idler_r[..rank].to_vec(),
            },
            ModeStorage::Separable { x, y, pairs } => ModeStorage::Separable {
                x: x.clone(),
                y: y.clone(),
                pairs: pairs[..rank].to_vec(),
            },
            ModeStorage::Analytic { specs, idler_signs } => ModeStorage::Analytic {
                specs: specs[..rank].to_vec(),
                idler_signs: idler_signs[..rank].to_vec(),
            },
        };
        Ok(Self {
            weights,
            tail_mass,
            storage,
            ..self.clone()
        })
    }

    /// Smallest rank whose discarded weight is at most `tail`.
    pub fn rank_for_tail(&self, tail: f64) -> usize {
        let mut kept = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            kept += w;
            if 1.0 - kept <= tail {
                return k + 1;
            }
        }
        self.rank()
    }

    fn check_index(&self, n: usize) -> Result<()> {
        if n >= self.rank() {
            return Err(Error::InvalidParameter(format!(
                "mode index {n} out of range for rank {}",
                self.rank()
            )));
        }
        Ok(())
    }

    fn outer(&self, x: &[Complex64], y: &[Complex64], space: Space) -> ComplexField {
        let n = self.grid.samples_per_axis();
        let mut values = Vec::with_capacity(n * n);
        for vy in y {
            for vx in x {
                values.push(vx * vy);
            }
        }
        ComplexField::new(self.grid, space, values).expect("axis lengths match the grid")
    }

    /// Signal mode `u_n`.
    pub fn signal_mode(&self, n: usize, space: Space) -> Result<ComplexField> {
        self.check_index(n)?;
        match &self.storage {
            ModeStorage::Dense { signal_q, signal_r, .. } => Ok(match space {
                Space::Momentum => signal_q[n].clone(),
                Space::Real => signal_r[n].clone(),
            }),
            ModeStorage::Separable { x, y, pairs } => {
                let (a, b) = pairs[n];
                Ok(match space {
                    Space::Momentum => self.outer(&x.signal_q[a], &y.signal_q[b], space),
                    Space::Real => self.outer(&x.signal_r[a], &y.signal_r[b], space),
                })
            }
            ModeStorage::Analytic { specs, .. } => mode_field(&specs[n], &self.grid, space),
        }
    }

    /// Idler mode `v_n` at physical idler coordinates.
    pub fn idler_mode(&self, n: usize, space: Space) -> Result<ComplexField> {
        self.check_index(n)?;
        match &self.storage {
            ModeStorage::Dense { idler_q, idler_r, .. } => Ok(match space {
                Space::Momentum => idler_q[n].clone(),
                Space::Real => idler_r[n].clone(),
            }),
            ModeStorage::Separable { x, y, pairs } => {
                let (a, b) = pairs[n];
                Ok(match space {
                    Space::Momentum => self.outer(&x.idler_q[a], &y.idler_q[b], space),
                    Space::Real => self.outer(&x.idler_r[a], &y.idler_r[b], space),
                })
            }
            ModeStorage::Analytic { specs, idler_signs } => {
                let u = mode_field(&specs[n], &self.grid, space)?;
                // v(q) = s conj(u(q)); in real space v(ρ) = s conj(u(-ρ)).
                let sign = Complex64::new(idler_signs[n], 0.0);
                let base = match space {
                    Space::Momentum => u,
                    Space::Real => u.mirrored(),
                };
                Ok(base.map(|z| z.conj() * sign))
            }
        }
    }

    /// Sample-frame idler mode `v̄_n(ρ̄) = conj(v_n(s ρ̄))` with `s` the regime
    /// sign, so that coincidence images read `Re Σ C_nm v̄_n*(ρ̄) v̄_m(ρ̄)`.
    pub fn sample_frame_idler(&self, n: usize) -> Result<ComplexField> {
        let v = self.idler_mode(n, Space::Real)?;
        let v = if self.regime_sign < 0 { v.mirrored() } else { v };
        Ok(v.map(|z| z.conj()))
    }

    /// The same decomposition with every mode stored as a sampled field.
    pub fn to_dense(&self) -> Result<Self> {
        let collect = |f: &(dyn Fn(usize) -> Result<ComplexField> + Sync)| {
            (0..self.rank()).into_par_iter().map(f).collect::<Result<Vec<_>>>()
        };
        let storage = ModeStorage::Dense {
            signal_q: collect(&|n| self.signal_mode(n, Space::Momentum))?,
            idler_q: collect(&|n| self.idler_mode(n, Space::Momentum))?,
            signal_r: collect(&|n| self.signal_mode(n, Space::Real))?,
            idler_r: collect(&|n| self.idler_mode(n, Space::Real))?,
        };
        Ok(Self {
            storage,
            ..self.clone()
        })
    }

    /// The signal modes as a [`ModeSet`] (Gram-checked).
    pub fn signal_modes(&self, space: Space) -> Result<ModeSet> {
        let fields = (0..self.rank())
            .into_par_iter()
            .map(|n| self.signal_mode(n, space))
            .collect::<Result<Vec<_>>>()?;
        ModeSet::from_fields(self.labels(), fields)
    }

    /// `Σ_n √λ_n U_n V_nᵀ` over unit vectors `U_n = u_n Δq`, as an `(N²)×(N²)`
    /// matrix comparable to the normalized input kernel.
    pub fn reconstruct_kernel(&self) -> Result<DMatrix<Complex64>> {
        let m = self.grid.len();
        let dq = self.grid.momentum_step();
        let mut out = DMatrix::<Complex64>::zeros(m, m);
        for n in 0..self.rank() {
            let u = self.signal_mode(n, Space::Momentum)?;
            let v = self.idler_mode(n, Space::Momentum)?;
            let s = self.weights[n].sqrt() * (1.0 - self.tail_mass).sqrt() * dq * dq;
            for (j, vj) in v.values().iter().enumerate() {
                let c = vj * s;
                for (i, ui) in u.values().iter().enumerate() {
                    out[(i, j)] += ui * c;
                }
            }
        }
        Ok(out)
    }

    /// Waist of the fundamental signal mode from its real-space second
    /// moment, `w = sqrt(2⟨r²⟩)`.
    pub fn fundamental_waist(&self) -> Result<f64> {
        let u = self.signal_mode(0, Space::Real)?;
        let coords = self.grid.coordinates(Space::Real);
        let n = coords.len();
        let (mut num, mut den) = (0.0, 0.0);
        for (k, v) in u.values().iter().enumerate() {
            let (x, y) = (coords[k % n], coords[k / n]);
            let p = v.norm_sqr();
            num += p * (x * x + y * y);
            den += p;
        }
        Ok((2.0 * num / den).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biphoton::{
        amplitude_gaussian, amplitude_sinc, entanglement_metrics, schmidt_number_gaussian,
        KernelModel,
    };
    use crate::grid::inner_product;
    use crate::modes::gram_deviation;

    fn gaussian_dec(sigma_p_l: f64, n: usize, rank: usize) -> SchmidtDecomposition {
        let spec = PumpCrystalSpec::from_product(sigma_p_l, KernelModel::DoubleGaussian).unwrap();
        let h = spec.default_half_extent(n, 2f64.sqrt()).unwrap();
        let grid = TransverseGrid::new(n, h).unwrap();
        schmidt_decompose(&amplitude_gaussian(&spec, &grid).unwrap(), rank).unwrap()
    }

    #[test]
    fn unit_schmidt_number_is_rank_one() {
        let dec = gaussian_dec(1.0, 32, 8);
        assert!(dec.weights()[0] > 1.0 - 1e-6);
        assert!(dec.weights()[1] < 1e-6);
        assert!(dec.tail_mass() < 1e-12);
    }

    #[test]
    fn geometric_axis_spectrum() {
        let spec = PumpCrystalSpec::from_product(0.1, KernelModel::DoubleGaussian).unwrap();
        let grid = TransverseGrid::new(64, spec.default_half_extent(64, 2f64.sqrt()).unwrap()).unwrap();
        let amp = amplitude_gaussian(&spec, &grid).unwrap();
        let dec = schmidt_decompose(&amp, 4).unwrap();
        let ModeStorage::Separable { x, .. } = dec.storage() else { panic!() };
        let ratios: Vec<f64> = (0..10).map(|k| x.weights[k + 1] / x.weights[k]).collect();
        for r in &ratios {
            assert!((r / ratios[0] - 1.0).abs() < 0.01, "{ratios:?}");
        }
        assert!((ratios[0] / gaussian_spectrum_ratio(0.1) - 1.0).abs() < 0.01);
    }

    #[test]
    fn participation_ratio_matches_closed_form() {
        let dec = gaussian_dec(0.1, 64, 64 * 64);
        let kappa = entanglement_metrics(dec.weights()).unwrap().schmidt_number_kappa;
        let expected = schmidt_number_gaussian(0.1, 1.0).unwrap();
        assert!((kappa / expected - 1.0).abs() < 0.05, "{kappa} vs {expected}");
        let ModeStorage::Separable { x, .. } = dec.storage() else { panic!() };
        let k1 = entanglement_metrics(&x.weights).unwrap().schmidt_number_kappa;
        assert!((k1 * k1 / kappa - 1.0).abs() < 1e-9);
    }

    #[test]
    fn weights_sum_to_one_and_are_sorted() {
        let dec = gaussian_dec(0.3, 32, 100);
        let s: f64 = dec.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-10);
        assert!(dec.weights().windows(2).all(|w| w[0] >= w[1]));
        assert!(dec.tail_mass() > 0.0);
    }

    #[test]
    fn degenerate_shells_follow_mode_order() {
        // Members of a degenerate shell may come in any order, but shells
        // stay together.
        let dec = gaussian_dec(0.1, 64, 6);
        let mut idx = dec.axis_indices().unwrap();
        assert_eq!(idx[0], (0, 0));
        idx[1..3].sort();
        idx[3..6].sort();
        assert_eq!(idx, vec![(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]);
    }

    #[test]
    fn separable_reconstruction_is_complete() {
        let spec = PumpCrystalSpec::from_product(0.5, KernelModel::DoubleGaussian).unwrap();
        let grid = TransverseGrid::new(16, 4.5).unwrap();
        let amp = amplitude_gaussian(&spec, &grid).unwrap();
        let dec = schmidt_decompose(&amp, grid.len()).unwrap();
        let err = (dec.reconstruct_kernel().unwrap() - amp.to_full_matrix()).norm();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn dense_reconstruction_and_orthonormality() {
        let spec = PumpCrystalSpec::from_product(2.0, KernelModel::Sinc).unwrap();
        let grid = TransverseGrid::new(16, 4.0).unwrap();
        let amp = amplitude_sinc(&spec, &grid).unwrap();
        let dec = schmidt_decompose(&amp, grid.len()).unwrap();
        let err = (dec.reconstruct_kernel().unwrap() - amp.to_full_matrix()).norm();
        assert!(err < 1e-6, "{err}");
        let u: Vec<_> = (0..40).map(|n| dec.signal_mode(n, Space::Momentum).unwrap()).collect();
        let v: Vec<_> = (0..40).map(|n| dec.idler_mode(n, Space::Real).unwrap()).collect();
        assert!(gram_deviation(&u).unwrap() < 1e-6);
        assert!(gram_deviation(&v).unwrap() < 1e-6);
    }

    #[test]
    fn sinc_participation_ratio_matches_purity_oracle() {
        // κ = ‖Φ‖_F⁴ / ‖Φ†Φ‖_F², independent of any SVD.
        let spec = PumpCrystalSpec::from_product(10.0, KernelModel::Sinc).unwrap();
        let grid = TransverseGrid::new(28, 6.4).unwrap();
        let amp = amplitude_sinc(&spec, &grid).unwrap();
        let m = amp.to_full_matrix();
        let g = m.adjoint() * &m;
        let oracle = m.norm().powi(4) / g.norm().powi(2);
        let dec = schmidt_decompose(&amp, grid.len()).unwrap();
        let kappa = entanglement_metrics(dec.weights()).unwrap().schmidt_number_kappa;
        assert!((kappa / oracle - 1.0).abs() < 1e-8, "{kappa} vs {oracle}");
    }

    #[test]
    fn global_phase_leaves_weights_unchanged() {
        let spec = PumpCrystalSpec::from_product(3.0, KernelModel::DoubleGaussian).unwrap();
        let grid = TransverseGrid::new(12, 4.0).unwrap();
        let amp = amplitude_gaussian(&spec, &grid).unwrap();
        let a = schmidt_decompose(&amp, 20).unwrap();
        let b = schmidt_decompose(&amp.with_global_phase(0.7), 20).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn phase_convention_makes_peak_positive() {
        let dec = gaussian_dec(0.2, 32, 10);
        for n in 0..10 {
            let u = dec.signal_mode(n, Space::Momentum).unwrap();
            let max = u.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
            let anchor = u.values().iter().find(|z| z.norm() >= (1.0 - 1e-9) * max).unwrap();
            assert!(anchor.im.abs() < 1e-12 && anchor.re > 0.0);
        }
    }

    #[test]
    fn rank_errors() {
        let spec = PumpCrystalSpec::from_product(1.0, KernelModel::DoubleGaussian).unwrap();
        let grid = TransverseGrid::new(8, 2.5).unwrap();
        let amp = amplitude_gaussian(&spec, &grid).unwrap();
        assert!(schmidt_decompose(&amp, 0).is_err());
        assert!(schmidt_decompose(&amp, 65).is_err());
        assert!(schmidt_decompose(&amp, 64).is_ok());
    }

    #[test]
    fn numerical_modes_match_analytic_basis() {
        for sigma_p_l in [0.2, 5.0] {
            let dec = gaussian_dec(sigma_p_l, 64, 10);
            let spec = PumpCrystalSpec::from_product(sigma_p_l, KernelModel::DoubleGaussian).unwrap();
            let ana = gaussian_schmidt_analytic(&spec, ModeFamily::HermiteGauss, 3, dec.grid()).unwrap();
            let ana_idx = ana.axis_indices().unwrap();
            for (n, pair) in dec.axis_indices().unwrap().into_iter().enumerate() {
                let k = ana_idx.iter().position(|&p| p == pair).unwrap();
                let u = dec.signal_mode(n, Space::Momentum).unwrap();
                let ua = ana.signal_mode(k, Space::Momentum).unwrap();
                assert!((inner_product(&ua, &u).unwrap().norm() - 1.0).abs() < 1e-6);
                // Same pairing between signal and idler, up to one common phase.
                let c_u = inner_product(&ua, &u).unwrap();
                let v = dec.idler_mode(n, Space::Real).unwrap();
                let va = ana.idler_mode(k, Space::Real).unwrap();
                let c_v = inner_product(&va, &v).unwrap();
                assert!((c_u * c_v - 1.0).norm() < 1e-6, "{sigma_p_l} mode {n}");
            }
            let fw = dec.fundamental_waist().unwrap();
            assert!((fw - 2f64.sqrt()).abs() < 1e-6, "{fw}");
        }
    }

    #[test]
    fn analytic_weights_and_truncation() {
        let spec = PumpCrystalSpec::from_product(0.5, KernelModel::DoubleGaussian).unwrap();
        let grid = TransverseGrid::new(32, 7.0).unwrap();
        let dec = gaussian_schmidt_analytic(&spec, ModeFamily::LaguerreGauss, 30, &grid).unwrap();
        let kappa = entanglement_metrics(dec.weights()).unwrap().schmidt_number_kappa;
        assert!((kappa - schmidt_number_gaussian(0.5, 1.0).unwrap()).abs() < 1e-6);
        let t = dec.truncated(3).unwrap();
        assert_eq!(t.rank(), 3);
        assert!((t.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(t.tail_mass() > dec.tail_mass());
    }

    #[test]
    fn pair_ordering_is_descending_with_lexicographic_ties() {
        let w = [0.5, 0.25, 0.125];
        let p: Vec<(usize, usize)> = order_pairs(&w, &w).iter().map(|p| (p.1, p.2)).collect();
        assert_eq!(&p[..6], &[(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]);
    }
}
