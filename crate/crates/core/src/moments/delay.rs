use super::ode::Trajectory;
use super::GeneParams;
use crate::control::PIGains;
use crate::error::{ensure_nonnegative, ensure_positive, Error, Result};

/// Past values of a scalar input with derivative information, queried by
/// cubic Hermite interpolation. Before the first sample the input is the
/// constant `initial`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayBuffer {
    pub delay: f64,
    initial: f64,
    t0: f64,
    dt: f64,
    /// `(u, du/dt)` at `t0 + k dt`.
    samples: Vec<(f64, f64)>,
}

impl DelayBuffer {
    /// Buffer for uniformly spaced samples starting at `t0` with spacing `dt`.
    pub fn new(delay: f64, initial: f64, t0: f64, dt: f64) -> Result<Self> {
        ensure_nonnegative("h", delay)?;
        ensure_positive("dt", dt)?;
        Ok(Self { delay, initial, t0, dt, samples: Vec::new() })
    }

    pub fn push(&mut self, u: f64, du: f64) {
        self.samples.push((u, du));
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Input value at absolute time `t`; must not be later than the last sample.
    pub fn at(&self, t: f64) -> f64 {
        if t < self.t0 || self.samples.is_empty() {
            return self.initial;
        }
        let s = (t - self.t0) / self.dt;
        let last = self.samples.len() - 1;
        let k = (s.floor() as usize).min(last);
        if k == last {
            return self.samples[last].0;
        }
        let tau = s - k as f64;
        let (p0, m0) = self.samples[k];
        let (p1, m1) = self.samples[k + 1];
        let (t2, t3) = (tau * tau, tau * tau * tau);
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + tau) * self.dt * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * self.dt * m1
    }

    /// Delayed value `u(t − h)`.
    pub fn delayed(&self, t: f64) -> f64 {
        self.at(t - self.delay)
    }
}

/// Linear mean loop with a constant input delay, in the state `(x1, x2, u)`:
///
/// ```text
/// ẋ1 = −γ_r x1 + u(t − h)
/// ẋ2 = k_p x1 − γ_p x2
/// u̇  = −k1 k_p x1 + (k1 γ_p − k2) x2 + k2 μ
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayLoop {
    pub params: GeneParams,
    pub gains: PIGains,
    pub reference: f64,
}

impl DelayLoop {
    pub fn equilibrium(&self) -> [f64; 3] {
        let p = &self.params;
        let x1 = p.gamma_p * self.reference / p.k_p;
        [x1, self.reference, p.gamma_r * x1]
    }

    fn rhs(&self, x: &[f64; 3], u_h: f64) -> [f64; 3] {
        let (p, g) = (&self.params, &self.gains);
        [
            -p.gamma_r * x[0] + u_h,
            p.k_p * x[0] - p.gamma_p * x[1],
            -g.k1 * p.k_p * x[0] + (g.k1 * p.gamma_p - g.k2) * x[1] + g.k2 * self.reference,
        ]
    }
}

/// Integrate a [`DelayLoop`] with RK4. The pre-history of `u` is the constant
/// `x0[2]`. For `h > 0` the step is reduced so that it divides `h`; stage
/// values at `t − h` come from Hermite interpolation of past steps.
pub fn integrate_delayed(
    lp: &DelayLoop,
    x0: [f64; 3],
    h: f64,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    ensure_nonnegative("h", h)?;
    ensure_positive("dt", dt)?;
    ensure_positive("t_end", t_end)?;
    let dt = if h > 0.0 { h / (h / dt).ceil() } else { dt };
    let n = (t_end / dt).ceil() as usize;
    let stride = stride.max(1);
    let mut buf = DelayBuffer::new(h, x0[2], 0.0, dt)?;
    let mut traj = Trajectory::new(vec!["t".into(), "x1".into(), "x2".into(), "u".into()]);
    let mut x = x0;
    traj.rows.push(vec![0.0, x[0], x[1], x[2]]);

    // With zero delay the current stage value of u is used directly.
    let input = |buf: &DelayBuffer, t: f64, stage: &[f64; 3]| if h == 0.0 { stage[2] } else { buf.delayed(t) };
    let add = |a: &[f64; 3], k: &[f64; 3], s: f64| [a[0] + s * k[0], a[1] + s * k[1], a[2] + s * k[2]];

    for i in 0..n {
        let t = i as f64 * dt;
        let k1 = lp.rhs(&x, input(&buf, t, &x));
        buf.push(x[2], k1[2]);
        let s2 = add(&x, &k1, 0.5 * dt);
        let k2 = lp.rhs(&s2, input(&buf, t + 0.5 * dt, &s2));
        let s3 = add(&x, &k2, 0.5 * dt);
        let k3 = lp.rhs(&s3, input(&buf, t + 0.5 * dt, &s3));
        let s4 = add(&x, &k3, dt);
        let k4 = lp.rhs(&s4, input(&buf, t + dt, &s4));
        for j in 0..3 {
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t_next = (i + 1) as f64 * dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { t: t_next });
        }
        if (i + 1) % stride == 0 || i + 1 == n {
            traj.rows.push(vec![t_next, x[0], x[1], x[2]]);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{integrate, FnSystem};

    #[test]
    fn hermite_buffer_is_exact_on_cubics() {
        let f = |t: f64| 1.0 + t - 2.0 * t * t + 0.5 * t * t * t;
        let df = |t: f64| 1.0 - 4.0 * t + 1.5 * t * t;
        let mut b = DelayBuffer::new(0.3, 7.0, 0.0, 0.1).unwrap();
        for k in 0..20 {
            let t = k as f64 * 0.1;
            b.push(f(t), df(t));
        }
        assert!((b.at(0.734) - f(0.734)).abs() < 1e-12);
        assert!((b.delayed(1.0) - f(0.7)).abs() < 1e-12);
        assert_eq!(b.at(-0.5), 7.0);
    }

    #[test]
    fn zero_delay_matches_undelayed_loop() {
        let lp = DelayLoop {
            params: GeneParams::new(1.0, 1.0, 1.0).unwrap(),
            gains: PIGains::new(0.5, 0.25).unwrap(),
            reference: 2.0,
        };
        let x0 = [0.3, 0.1, 0.0];
        let tr = integrate_delayed(&lp, x0, 0.0, 20.0, 0.01, 1).unwrap();
        let mut sys = FnSystem::new(3, |_, x: &[f64], dx: &mut [f64]| {
            let d = lp.rhs(&[x[0], x[1], x[2]], x[2]);
            dx.copy_from_slice(&d);
        });
        let x = integrate(&mut sys, &x0, 0.0, 20.0, 0.01, 1, |_, _| {}).unwrap();
        let last = tr.last().unwrap();
        for j in 0..3 {
            assert!((last[j + 1] - x[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn equilibrium_is_stationary_under_delay() {
        let lp = DelayLoop {
            params: GeneParams::new(0.06, 0.0066, 0.03).unwrap(),
            gains: PIGains::new(0.01, 0.0007).unwrap(),
            reference: 10.0,
        };
        let eq = lp.equilibrium();
        let tr = integrate_delayed(&lp, eq, 5.0, 100.0, 0.5, 10).unwrap();
        let last = tr.last().unwrap();
        for j in 0..3 {
            assert!((last[j + 1] - eq[j]).abs() < 1e-10);
        }
    }
}
