//! Explicit finite differences for the scalar HJB equation
//! `-v_t = ½ c v_xx + β - R|c v_x| + l(x)`, `v(T) = φ`, used as an
//! independent oracle for the one-mode backward solver.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarHjb {
    /// Diffusion coefficient `c` (variance rate).
    pub diffusion: f64,
    /// Control radius `R` in `ψ(z) = β - R|z|`.
    pub radius: f64,
    /// Constant shift `β`.
    pub shift: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    /// Safety factor applied to the explicit stability limit.
    pub cfl: f64,
}

impl ScalarHjb {
    pub fn new(diffusion: f64, radius: f64, shift: f64) -> Self {
        Self {
            diffusion,
            radius,
            shift,
            x_min: -5.0,
            x_max: 5.0,
            dx: 1e-3,
            cfl: 0.9,
        }
    }

    /// Solution profile on the spatial grid at time `t0`.
    pub fn solve<P, L>(&self, t0: f64, horizon: f64, phi: P, l: L) -> Result<ScalarProfile>
    where
        P: Fn(f64) -> f64,
        L: Fn(f64) -> f64,
    {
        if !(self.diffusion > 0.0) || !(self.radius >= 0.0) || !(self.dx > 0.0) {
            return Err(Error::InvalidInput("need c > 0, R ≥ 0, dx > 0".into()));
        }
        if !(horizon >= t0) || !(self.x_max > self.x_min) {
            return Err(Error::InvalidInput("empty time or space interval".into()));
        }
        let n = ((self.x_max - self.x_min) / self.dx).round() as usize + 1;
        let dx = (self.x_max - self.x_min) / (n - 1) as f64;
        let c = self.diffusion;
        let rc = self.radius * c;
        let limit = 1.0 / (c / (dx * dx) + rc / dx);
        let span = horizon - t0;
        let steps = ((span / (self.cfl * limit)).ceil() as usize).max(1);
        let dt = span / steps as f64;
        let xs: Vec<f64> = (0..n).map(|i| self.x_min + i as f64 * dx).collect();
        let lx: Vec<f64> = xs.iter().map(|&x| l(x)).collect();
        let mut v: Vec<f64> = xs.iter().map(|&x| phi(x)).collect();
        let mut next = v.clone();
        let half_c = 0.5 * c / (dx * dx);
        for _ in 0..steps {
            for i in 0..n {
                // reflecting ghost nodes
                let left = v[i.saturating_sub(1)];
                let right = v[(i + 1).min(n - 1)];
                let fwd = (right - v[i]) / dx;
                let bwd = (v[i] - left) / dx;
                let ham = 0.0_f64.min(rc * fwd).min(-rc * bwd);
                next[i] = v[i] + dt * (half_c * (right - 2.0 * v[i] + left) + self.shift + ham + lx[i]);
            }
            std::mem::swap(&mut v, &mut next);
        }
        Ok(ScalarProfile {
            x_min: self.x_min,
            dx,
            values: v,
            steps,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarProfile {
    pub x_min: f64,
    pub dx: f64,
    pub values: Vec<f64>,
    pub steps: usize,
}

impl ScalarProfile {
    /// Linear interpolation, constant outside the grid.
    pub fn at(&self, x: f64) -> f64 {
        let s = ((x - self.x_min) / self.dx).max(0.0);
        let i = (s.floor() as usize).min(self.values.len() - 1);
        if i + 1 >= self.values.len() {
            return self.values[i];
        }
        let w = s - i as f64;
        (1.0 - w) * self.values[i] + w * self.values[i + 1]
    }

    /// Centered derivative at `x`.
    pub fn slope(&self, x: f64) -> f64 {
        (self.at(x + self.dx) - self.at(x - self.dx)) / (2.0 * self.dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_kernel_on_quadratic() {
        // v = x² + c(T-t) solves -v_t = ½ c v_xx
        let mut s = ScalarHjb::new(0.4, 0.0, 0.0);
        s.dx = 1e-2;
        let p = s.solve(0.0, 0.5, |x| x * x, |_| 0.0).unwrap();
        for x in [-1.0, 0.0, 0.7] {
            assert!((p.at(x) - (x * x + 0.2)).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_shift_and_running_cost() {
        let mut s = ScalarHjb::new(0.4, 1.0, 0.3);
        s.dx = 1e-2;
        let p = s.solve(0.0, 1.0, |_| 2.0, |_| 0.5).unwrap();
        assert!((p.at(0.1) - 2.8).abs() < 1e-9);
    }

    #[test]
    fn pure_transport_of_a_slope() {
        // φ = x: v_x = 1 everywhere so v = x - R c (T-t) away from the walls
        let mut s = ScalarHjb::new(0.4, 2.0, 0.0);
        s.dx = 1e-2;
        let p = s.solve(0.0, 0.5, |x| x, |_| 0.0).unwrap();
        assert!((p.at(0.0) + 0.4).abs() < 1e-9);
        assert!((p.slope(0.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn control_lowers_the_value() {
        let mut s = ScalarHjb::new(0.4, 1.0, 0.0);
        s.dx = 1e-2;
        let free = ScalarHjb {
            radius: 0.0,
            ..s.clone()
        };
        let clip = |x: f64| x.clamp(-1.0, 1.0);
        let a = s.solve(0.0, 1.0, clip, |_| 0.0).unwrap();
        let b = free.solve(0.0, 1.0, clip, |_| 0.0).unwrap();
        for x in [-0.5, 0.0, 0.5] {
            assert!(a.at(x) < b.at(x));
        }
    }
}
