use super::Integrator;
use crate::bergman::{BergmanSpace, HermitianInner, MomentValue};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Largest step with `dt k^p |mu0|_op <= 1/2`.
pub fn balancing_step_guard(k: u32, power: i32, mu0: &MomentValue) -> f64 {
    let op = linalg::op_norm(mu0.matrix()) * (k.max(1) as f64).powi(power);
    if op > 0.0 {
        0.5 / op
    } else {
        f64::INFINITY
    }
}

/// Default step `0.1 / k^p`, shortened by [`balancing_step_guard`].
pub fn default_balancing_dt(k: u32, power: i32, mu0: &MomentValue) -> f64 {
    (0.1 / (k.max(1) as f64).powi(power)).min(balancing_step_guard(k, power, mu0))
}

/// Ambient-frame velocity `C^dagger (k^p mu0) C` of the Gram matrix.
fn velocity(space: &BergmanSpace, h: &HermitianInner, power: i32) -> Result<CMat> {
    let mu0 = space.moment_bar_zero(h)?;
    let kp = (space.k() as f64).powi(power);
    Ok(h.congruence(mu0.matrix()).scale(kp))
}

/// Advances the Gram matrix with the already evaluated `mu0 = mu0(H)`.
///
/// The inner product moves along `C^dagger exp(dt k^p mu0) C`: sections on
/// which the moment map is below average gain weight. This is the direction in
/// which `FS_k` of the flow follows the heat flow.
pub(crate) fn advance(
    space: &BergmanSpace,
    h: &HermitianInner,
    mu0: &MomentValue,
    dt: f64,
    integrator: Integrator,
    power: i32,
) -> Result<HermitianInner> {
    let kp = (space.k() as f64).powi(power);
    let a = mu0.matrix().scale(kp * dt);
    match integrator {
        Integrator::ExpEuler => HermitianInner::new(h.congruence(&linalg::expm_hermitian(&a))),
        Integrator::Euler => {
            let n = a.nrows();
            HermitianInner::new(h.congruence(&(CMat::identity(n, n) + a)))
                .map_err(|e| Error::StepRejected(format!("explicit Euler lost positivity: {e}")))
        }
        Integrator::Rk4 => {
            let k1 = h.congruence(mu0.matrix()).scale(kp);
            let stage = |c: f64, k: &CMat| {
                HermitianInner::new(linalg::hermitian_part(&(h.matrix() + k.scale(c * dt))))
                    .map_err(|e| Error::StepRejected(format!("RK4 stage lost positivity: {e}")))
            };
            let k2 = velocity(space, &stage(0.5, &k1)?, power)?;
            let k3 = velocity(space, &stage(0.5, &k2)?, power)?;
            let k4 = velocity(space, &stage(1.0, &k3)?, power)?;
            let inc = (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0);
            HermitianInner::new(linalg::hermitian_part(&(h.matrix() + inc)))
                .map_err(|e| Error::StepRejected(format!("RK4 step lost positivity: {e}")))
        }
    }
}

/// One step of the normalized balancing flow.
pub fn balancing_step(
    space: &BergmanSpace,
    h: &HermitianInner,
    dt: f64,
    integrator: Integrator,
    power: i32,
) -> Result<HermitianInner> {
    let mu0 = space.moment_bar_zero(h)?;
    advance(space, h, &mu0, dt, integrator, power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{MetricField, Perturbation};
    use crate::manifold::ModelConfig;

    fn space(degrees: Vec<i64>, k: u32) -> BergmanSpace {
        BergmanSpace::with_default_grid(&ModelConfig::new(degrees, k).unwrap()).unwrap()
    }

    #[test]
    fn balanced_point_is_fixed() {
        let s = space(vec![1, 1], 3);
        let h = s.hilb(&MetricField::fubini_study(&[1, 1], s.grid())).unwrap();
        let next = balancing_step(&s, &h, 0.01, Integrator::ExpEuler, 2).unwrap();
        assert!((next.matrix() - h.matrix()).norm() < 1e-13);
    }

    #[test]
    fn exp_and_plain_euler_agree_to_second_order() {
        let s = space(vec![1, -1], 3);
        let h = s.hilb(&Perturbation::new(&[1, -1], 3, 0.3).metric(s.grid()).unwrap()).unwrap();
        let gap = |dt: f64| {
            let a = balancing_step(&s, &h, dt, Integrator::ExpEuler, 2).unwrap();
            let b = balancing_step(&s, &h, dt, Integrator::Euler, 2).unwrap();
            (a.matrix() - b.matrix()).norm()
        };
        let ratio = gap(2e-3) / gap(1e-3);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn split_fubini_study_moves_blocks_apart() {
        // mu0 is constant on each block: 1/(m_i + 1) - 1/(k + 1)
        let k = 4;
        let s = space(vec![1, -1], k);
        let h = s.hilb(&MetricField::fubini_study(&[1, -1], s.grid())).unwrap();
        let mu0 = s.moment_bar_zero(&h).unwrap();
        for a in 0..s.n_sections() {
            let m = if a < 6 { 5.0 } else { 3.0 };
            let want = 1.0 / (m + 1.0) - 1.0 / (k as f64 + 1.0);
            assert!((mu0.matrix()[(a, a)].re - want).abs() < 1e-12);
        }
        let next = balancing_step(&s, &h, 0.01, Integrator::ExpEuler, 2).unwrap();
        let rate: f64 = 16.0 * (1.0 / 6.0 - 1.0 / 5.0) * 0.01;
        assert!((next.matrix()[(0, 0)].re - h.matrix()[(0, 0)].re * rate.exp()).abs() < 1e-12);
    }
}
