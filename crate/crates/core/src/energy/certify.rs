//! Pointwise certificates: growth (coercivity) of `ψ` and the Cauchy-stress obstruction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ElasticParams, EnergyModel, DIM};
use crate::linalg::{cofactor, det, frobenius, inverse, mat2, rotation, Mat2};
use crate::Result;

/// `DΨ(M)Mᵀ` and its distance from the nearest multiple of the identity.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StressReport {
    pub stress: Mat2,
    /// `½ tr(DΨ(M)Mᵀ)`.
    pub pressure: f64,
    /// `|DΨ(M)Mᵀ − pressure·1|`.
    pub deviation: f64,
}

pub fn cauchy_stress(elastic: &ElasticParams, m: &Mat2) -> Result<StressReport> {
    let stress = elastic.stored_energy_grad(m)? * m.transpose();
    let pressure = 0.5 * stress.trace();
    let deviation = frobenius(&(stress - Mat2::identity() * pressure));
    Ok(StressReport {
        stress,
        pressure,
        deviation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityConstants {
    pub c: f64,
    pub c0: f64,
    pub p: f64,
}

impl CoercivityConstants {
    /// `C = 1/2`, `p = α`, `C0 = −min h`.
    pub fn for_params(elastic: &ElasticParams) -> Self {
        Self {
            c: 0.5,
            c0: -elastic.volumetric().min_value(),
            p: elastic.alpha(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoercivityCertificate {
    pub constants: CoercivityConstants,
    pub samples: usize,
    /// `min ψ − C(|A|^p + det A·|A⁻¹|^p) + C0` over the samples.
    pub worst_margin: f64,
    pub worst_matrix: [f64; 4],
    /// `C1 = C·n^{p/2}` in `ψ ≥ C1 (det A)^{1−p/n} − C0`.
    pub c1: f64,
    pub worst_det_bound_margin: f64,
    /// `min |B|² − 2 det B` with `B = cof A` (Hadamard, `n = 2`), relative to `|B|²`.
    pub worst_hadamard_margin: f64,
    pub passed: bool,
}

/// Samples `A = Q diag(v1, v2) R` with singular values log-uniform in
/// `[1e-3, 1e3]`, random rotations and intensities in `[0, 1]^m`.
pub fn certify_coercivity(
    model: &EnergyModel,
    constants: CoercivityConstants,
    samples: usize,
    channels: usize,
    seed: u64,
) -> Result<CoercivityCertificate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let CoercivityConstants { c, c0, p } = constants;
    let c1 = c * DIM.powf(0.5 * p);
    let mut worst = f64::INFINITY;
    let mut worst_matrix = [0.0; 4];
    let mut worst_det_bound = f64::INFINITY;
    let mut worst_hadamard = f64::INFINITY;
    let (lo, hi) = (1e-3_f64.ln(), 1e3_f64.ln());
    for _ in 0..samples.max(1) {
        let v1 = rng.gen_range(lo..=hi).exp();
        let v2 = rng.gen_range(lo..=hi).exp();
        let a = rotation(rng.gen_range(-3.2..3.2))
            * mat2(v1, 0.0, 0.0, v2)
            * rotation(rng.gen_range(-3.2..3.2));
        let mut cs = [0.0; 3];
        let mut ds = [0.0; 3];
        for k in 0..channels {
            cs[k] = rng.gen();
            ds[k] = rng.gen();
        }
        let psi = model.psi(&cs[..channels], &ds[..channels], &a)?;
        let d = det(&a);
        let growth = frobenius(&a).powf(p) + d * frobenius(&inverse(&a)).powf(p);
        let margin = psi - c * growth + c0;
        if margin < worst {
            worst = margin;
            worst_matrix = [a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]];
        }
        worst_det_bound = worst_det_bound.min(psi + c0 - c1 * d.powf(1.0 - p / DIM));
        let b = cofactor(&a);
        let nb2 = frobenius(&b).powi(2);
        worst_hadamard = worst_hadamard.min((nb2 - DIM * det(&b)) / nb2);
    }
    Ok(CoercivityCertificate {
        constants,
        samples: samples.max(1),
        worst_margin: worst,
        worst_matrix,
        c1,
        worst_det_bound_margin: worst_det_bound,
        worst_hadamard_margin: worst_hadamard,
        passed: worst >= 0.0 && worst_det_bound >= 0.0 && worst_hadamard >= -1e-15,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{ElasticFamily, MismatchParams};

    #[test]
    fn fluid_stress_is_spherical() {
        let p = ElasticParams::default().with_family(ElasticFamily::Fluid);
        let m = mat2(1.0, 1.0, 0.0, 1.0);
        let s = cauchy_stress(&p, &m).unwrap();
        assert!(s.deviation < 1e-12);
        // DΨ(M)Mᵀ = H'(det M) det M · 1
        assert!((s.pressure - p.big_h_prime(1.0)).abs() < 1e-12);
    }

    #[test]
    fn conformal_stress_is_spherical() {
        let p = ElasticParams::default();
        for lambda in [0.5, 1.0, 1.7, 3.0] {
            let s = cauchy_stress(&p, &(rotation(0.4) * lambda)).unwrap();
            assert!(s.deviation <= 1e-10 * (1.0 + s.pressure.abs()));
        }
    }

    #[test]
    fn shear_stress_is_not_spherical() {
        let p = ElasticParams::default();
        let m = mat2(1.0, 1.0, 0.0, 1.0);
        let s = cauchy_stress(&p, &m).unwrap();
        assert!(s.deviation > 1.0, "{}", s.deviation);
        // cross-check the stress with central differences of Ψ
        let h = 1e-6;
        let mut g = Mat2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                let mut mp = m;
                let mut mm = m;
                mp[(i, j)] += h;
                mm[(i, j)] -= h;
                g[(i, j)] =
                    (p.stored_energy(&mp).unwrap() - p.stored_energy(&mm).unwrap()) / (2.0 * h);
            }
        }
        assert!((g * m.transpose() - s.stress).norm() < 1e-6);
    }

    #[test]
    fn identity_margin_is_minus_four_minus_h_min() {
        let model = EnergyModel::default();
        let k = CoercivityConstants::for_params(&model.elastic);
        let psi = model.psi(&[0.2], &[0.2], &Mat2::identity()).unwrap();
        let margin = psi - k.c * (2f64.powi(2) + 2f64.powi(2)) + k.c0;
        assert!((margin - (-4.0 - model.elastic.volumetric().min_value())).abs() < 1e-12);
        assert!(margin >= 0.0);
    }

    #[test]
    fn margin_grows_along_stretch() {
        let model = EnergyModel::default();
        let k = CoercivityConstants::for_params(&model.elastic);
        let margin = |t: f64| {
            let a = mat2(t, 0.0, 0.0, 1.0 / t);
            let g = frobenius(&a).powf(k.p) + det(&a) * frobenius(&inverse(&a)).powf(k.p);
            model.psi(&[0.0], &[0.0], &a).unwrap() - k.c * g + k.c0
        };
        // det = 1: ψ = 2(t⁴ + t⁻⁴) - 4 and C·growth = (t² + t⁻²)², so margin ~ t⁴
        let ratio = margin(1e3) / 1e12;
        assert!((ratio - 1.0).abs() < 1e-6, "{ratio}");
        assert!(margin(10.0) < margin(100.0));
    }

    #[test]
    fn certificate_passes_for_sv_and_fails_for_fluid() {
        let model = EnergyModel::default();
        let k = CoercivityConstants::for_params(&model.elastic);
        let cert = certify_coercivity(&model, k, 2000, 1, 11).unwrap();
        assert!(cert.passed, "{cert:?}");
        let fluid = EnergyModel::new(
            model.elastic.with_family(ElasticFamily::Fluid),
            MismatchParams::default(),
        );
        let cert = certify_coercivity(&fluid, k, 2000, 1, 11).unwrap();
        assert!(!cert.passed && cert.worst_margin < 0.0);
    }
}
