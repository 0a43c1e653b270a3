use std::io::{self, Write};

use crate::error::{ensure_positive, Error, Result};

/// A finite-dimensional ODE whose exogenous inputs are held constant over
/// each integration step.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Latch inputs for the step starting at `t` (zero-order hold).
    fn hold(&mut self, _t: f64) {}

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]);
}

/// Adapter turning a closure `f(t, x, dx)` into an [`OdeSystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnSystem<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        (self.f)(t, x, dx)
    }
}

struct Scratch {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n] }
    }
}

/// One classical RK4 step of size `dt`, in place.
pub fn rk4_step<S: OdeSystem + ?Sized>(sys: &S, t: f64, x: &mut [f64], dt: f64) {
    let mut s = Scratch::new(x.len());
    step(sys, t, x, dt, &mut s);
}

fn step<S: OdeSystem + ?Sized>(sys: &S, t: f64, x: &mut [f64], dt: f64, s: &mut Scratch) {
    let h2 = 0.5 * dt;
    let [k1, k2, k3, k4] = &mut s.k;
    sys.rhs(t, x, k1);
    for i in 0..x.len() {
        s.tmp[i] = x[i] + h2 * k1[i];
    }
    sys.rhs(t + h2, &s.tmp, k2);
    for i in 0..x.len() {
        s.tmp[i] = x[i] + h2 * k2[i];
    }
    sys.rhs(t + h2, &s.tmp, k3);
    for i in 0..x.len() {
        s.tmp[i] = x[i] + dt * k3[i];
    }
    sys.rhs(t + dt, &s.tmp, k4);
    for i in 0..x.len() {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrate `sys` from `x0` over `[t0, t1]` with fixed RK4 steps.
///
/// The step is shrunk so that it divides the interval. `record(t, x)` is
/// called at `t0`, every `stride` steps, and at `t1`. Returns the final state.
pub fn integrate<S, R>(
    sys: &mut S,
    x0: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
    stride: usize,
    mut record: R,
) -> Result<Vec<f64>>
where
    S: OdeSystem + ?Sized,
    R: FnMut(f64, &[f64]),
{
    ensure_positive("dt", dt)?;
    if x0.len() != sys.dim() {
        return Err(Error::Dimension { what: "initial state", expected: sys.dim(), got: x0.len() });
    }
    if !(t1 >= t0) {
        return Err(Error::EmptyInterval { lo: t0, hi: t1 });
    }
    let stride = stride.max(1);
    let n = ((t1 - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let h = if n == 0 { 0.0 } else { (t1 - t0) / n as f64 };
    let mut x = x0.to_vec();
    let mut scratch = Scratch::new(x.len());
    record(t0, &x);
    for i in 0..n {
        let t = t0 + i as f64 * h;
        sys.hold(t);
        step(sys, t, &mut x, h, &mut scratch);
        let t_next = if i + 1 == n { t1 } else { t0 + (i + 1) as f64 * h };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { t: t_next });
        }
        if (i + 1) % stride == 0 || i + 1 == n {
            record(t_next, &x);
        }
    }
    Ok(x)
}

/// Sampled trajectory table with named columns, the first being `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.rows.last().map(Vec::as_slice)
    }

    /// Row at the largest recorded time `<= t`.
    pub fn at(&self, t: f64) -> Option<&[f64]> {
        let idx = self.rows.partition_point(|r| r[0] <= t + 1e-9 * t.abs().max(1.0));
        idx.checked_sub(1).map(|i| self.rows[i].as_slice())
    }

    /// CSV with a header row; floats use 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let mut line = String::with_capacity(row.len() * 24);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{v:.16e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{gene_mean_rhs, GeneParams};

    #[test]
    fn exponential_decay() {
        let mut sys = FnSystem::new(1, |_, x: &[f64], dx: &mut [f64]| dx[0] = -x[0]);
        let x = integrate(&mut sys, &[1.0], 0.0, 1.0, 1e-3, 1, |_, _| {}).unwrap();
        assert!((x[0] - (-1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn records_endpoints_and_stride() {
        let mut sys = FnSystem::new(1, |_, _: &[f64], dx: &mut [f64]| dx[0] = 1.0);
        let mut ts = Vec::new();
        integrate(&mut sys, &[0.0], 0.0, 1.0, 0.1, 3, |t, _| ts.push(t)).unwrap();
        assert_eq!(ts.len(), 5);
        assert_eq!(ts[0], 0.0);
        assert_eq!(*ts.last().unwrap(), 1.0);
    }

    #[test]
    fn divergence_is_reported() {
        let mut sys = FnSystem::new(1, |_, x: &[f64], dx: &mut [f64]| dx[0] = x[0] * x[0]);
        match integrate(&mut sys, &[1.0], 0.0, 10.0, 0.01, 1, |_, _| {}) {
            Err(Error::Diverged { t }) => assert!(t > 0.9 && t < 10.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gene_mean_equilibrium_is_stationary() {
        let p = GeneParams::new(0.06, 0.0066, 0.03).unwrap();
        let mut sys = FnSystem::new(2, move |_, x: &[f64], dx: &mut [f64]| {
            let d = gene_mean_rhs([x[0], x[1]], 0.033, &p);
            dx.copy_from_slice(&d);
        });
        let x = integrate(&mut sys, &[1.1, 10.0], 0.0, 100.0, 0.1, 1, |_, _| {}).unwrap();
        assert!((x[0] - 1.1).abs() < 1e-10 && (x[1] - 10.0).abs() < 1e-10);
    }

    #[test]
    fn csv_header_and_precision() {
        let mut tr = Trajectory::new(vec!["t".into(), "x1".into()]);
        tr.rows.push(vec![0.0, 1.0 / 3.0]);
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x1"));
        let v: f64 = lines.next().unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 1.0 / 3.0);
    }
}
