//! Scalar B-spline curves: evaluation, polynomial conversion, knot insertion,
//! derivatives, and the three-control-point boundary solve used to splice
//! predicted prototype curves onto the currently observed vehicle state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EPS: f64 = 1e-12;

/// Scalar-valued B-spline of degree `degree` with a non-decreasing knot
/// vector. Control point count n+1 and knot count m+1 satisfy m = n + d + 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineCurve {
    pub degree: usize,
    pub knots: Vec<f64>,
    pub ctrl: Vec<f64>,
}

/// Polynomial a_0 + a_1 t + ... + a_n t^n over `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialCurve {
    /// Coefficients in ascending powers.
    pub coeffs: Vec<f64>,
    pub domain: (f64, f64),
}

impl PolynomialCurve {
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> PolynomialCurve {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect();
        PolynomialCurve {
            coeffs,
            domain: self.domain,
        }
    }

    /// Least-squares polynomial fit. Callers should normalize `ts` to a
    /// well-conditioned interval (the Vandermonde matrix is used directly).
    pub fn fit(ts: &[f64], ys: &[f64], degree: usize) -> PolynomialCurve {
        assert!(ts.len() == ys.len() && ts.len() > degree);
        let rows = ts.len();
        let cols = degree + 1;
        let a = nalgebra::DMatrix::from_fn(rows, cols, |r, c| ts[r].powi(c as i32));
        let b = nalgebra::DVector::from_column_slice(ys);
        let svd = a.svd(true, true);
        let sol = svd.solve(&b, 1e-12).expect("svd solve");
        PolynomialCurve {
            coeffs: sol.iter().copied().collect(),
            domain: (
                ts.iter().copied().fold(f64::INFINITY, f64::min),
                ts.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
        }
    }
}

fn binom(n: usize, k: usize) -> f64 {
    let mut v = 1.0;
    for i in 0..k {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}

impl BSplineCurve {
    /// Number of control points minus one.
    pub fn n(&self) -> usize {
        self.ctrl.len() - 1
    }

    /// Start of the active domain.
    pub fn domain_start(&self) -> f64 {
        self.knots[self.degree]
    }

    /// End of the active domain.
    pub fn domain_end(&self) -> f64 {
        self.knots[self.knots.len() - 1 - self.degree]
    }

    /// Knot span index s with knots[s] <= t < knots[s+1]; at the right end of
    /// the domain the last non-empty span is returned (closed right endpoint).
    fn find_span(&self, t: f64) -> Result<usize> {
        let d = self.degree;
        let n = self.n();
        let lo = self.domain_start();
        let hi = self.domain_end();
        if t < lo - 1e-9 || t > hi + 1e-9 {
            return Err(Error::DomainError(t));
        }
        let t = t.clamp(lo, hi);
        if t >= hi {
            let mut s = n;
            while s > d && self.knots[s] >= hi {
                s -= 1;
            }
            return Ok(s);
        }
        let mut s = d;
        while s < n && self.knots[s + 1] <= t {
            s += 1;
        }
        Ok(s)
    }

    /// de Boor evaluation.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let d = self.degree;
        let s = self.find_span(t)?;
        let t = t.clamp(self.domain_start(), self.domain_end());
        let mut pts: Vec<f64> = (0..=d).map(|j| self.ctrl[s - d + j]).collect();
        for r in 1..=d {
            for j in (r..=d).rev() {
                let i = s - d + j;
                let den = self.knots[i + d + 1 - r] - self.knots[i];
                let alpha = if den.abs() < EPS {
                    0.0
                } else {
                    (t - self.knots[i]) / den
                };
                pts[j] = (1.0 - alpha) * pts[j - 1] + alpha * pts[j];
            }
        }
        Ok(pts[d])
    }

    /// Converts a polynomial on [0, 1] into a clamped Bezier-form B-spline of
    /// degree `d` with control points P_i = sum_j C(i,j)/C(d,j) a_j.
    pub fn from_polynomial(poly: &PolynomialCurve, d: usize) -> Result<BSplineCurve> {
        if poly.coeffs.len() > d + 1 {
            return Err(Error::DegreeError(poly.coeffs.len() - 1, d));
        }
        let mut knots = vec![0.0; d + 1];
        knots.extend(vec![1.0; d + 1]);
        let ctrl = (0..=d)
            .map(|i| {
                (0..=i.min(poly.coeffs.len() - 1))
                    .map(|j| binom(i, j) / binom(d, j) * poly.coeffs[j])
                    .sum()
            })
            .collect();
        Ok(BSplineCurve {
            degree: d,
            knots,
            ctrl,
        })
    }

    /// Boehm knot insertion; the curve shape is unchanged.
    pub fn insert_knot(&self, t_hat: f64) -> Result<BSplineCurve> {
        let d = self.degree;
        if t_hat <= self.domain_start() + EPS || t_hat >= self.domain_end() - EPS {
            return Err(Error::DomainError(t_hat));
        }
        let mult = self
            .knots
            .iter()
            .filter(|&&k| (k - t_hat).abs() < EPS)
            .count();
        if mult + 1 > d {
            return Err(Error::KnotMultiplicityError(t_hat));
        }
        let s = self.find_span(t_hat)?;
        let n = self.n();
        let mut ctrl = Vec::with_capacity(n + 2);
        for i in 0..=(n + 1) {
            if i + d <= s {
                ctrl.push(self.ctrl[i]);
            } else if i <= s {
                let den = self.knots[i + d] - self.knots[i];
                let alpha = if den.abs() < EPS {
                    0.0
                } else {
                    (t_hat - self.knots[i]) / den
                };
                ctrl.push((1.0 - alpha) * self.ctrl[i - 1] + alpha * self.ctrl[i]);
            } else {
                ctrl.push(self.ctrl[i - 1]);
            }
        }
        let mut knots = self.knots.clone();
        knots.insert(s + 1, t_hat);
        Ok(BSplineCurve {
            degree: d,
            knots,
            ctrl,
        })
    }

    fn derivative_once(&self) -> BSplineCurve {
        let d = self.degree;
        assert!(d >= 1);
        let n = self.n();
        let ctrl = (0..n)
            .map(|i| {
                let den = self.knots[i + d + 1] - self.knots[i + 1];
                if den.abs() < EPS {
                    0.0
                } else {
                    d as f64 * (self.ctrl[i + 1] - self.ctrl[i]) / den
                }
            })
            .collect();
        BSplineCurve {
            degree: d - 1,
            knots: self.knots[1..self.knots.len() - 1].to_vec(),
            ctrl,
        }
    }

    /// r-th derivative curve of degree d - r; the knot vector is reduced to
    /// t_r ... t_{m-r}.
    pub fn derivative(&self, r: usize) -> Result<BSplineCurve> {
        if r > self.degree {
            return Err(Error::DegreeError(r, self.degree));
        }
        let mut c = self.clone();
        for _ in 0..r {
            c = c.derivative_once();
        }
        Ok(c)
    }

    /// Linear coefficients of (value, 1st, 2nd derivative) at `t` with respect
    /// to the control points.
    fn constraint_rows(&self, t: f64) -> Result<[Vec<f64>; 3]> {
        let n1 = self.ctrl.len();
        let mut rows = [vec![0.0; n1], vec![0.0; n1], vec![0.0; n1]];
        for i in 0..n1 {
            let mut unit = self.clone();
            unit.ctrl = vec![0.0; n1];
            unit.ctrl[i] = 1.0;
            rows[0][i] = unit.eval(t)?;
            rows[1][i] = unit.derivative(1)?.eval(t)?;
            rows[2][i] = unit.derivative(2)?.eval(t)?;
        }
        Ok(rows)
    }

    /// Solves for the three consecutive control points that govern the curve
    /// around `t_eval` so the adapted curve matches position, velocity, and
    /// acceleration targets there. The caller must have inserted triple knots
    /// at the adaptation-interval boundaries, which confines the nonzero
    /// constraint coefficients to exactly three control points and hence the
    /// modification to the adaptation interval (local support).
    pub fn boundary_fit(&self, x: f64, x_dot: f64, x_ddot: f64, t_eval: f64) -> Result<BSplineCurve> {
        let rows = self.constraint_rows(t_eval)?;
        let scale = rows
            .iter()
            .flat_map(|r| r.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
            .max(1.0);
        let active: Vec<usize> = (0..self.ctrl.len())
            .filter(|&i| rows.iter().any(|r| r[i].abs() > 1e-9 * scale))
            .collect();
        if active.len() != 3 || active[2] - active[0] != 2 {
            return Err(Error::SolverError);
        }
        let m = nalgebra::Matrix3::from_fn(|r, c| rows[r][active[c]]);
        let targets = nalgebra::Vector3::new(x, x_dot, x_ddot);
        let sol = m.lu().solve(&targets).ok_or(Error::SolverError)?;
        let mut out = self.clone();
        for (k, &i) in active.iter().enumerate() {
            out.ctrl[i] = sol[k];
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent recursive Cox-de Boor basis evaluator (test oracle).
    fn basis(knots: &[f64], i: usize, d: usize, t: f64) -> f64 {
        if d == 0 {
            // closed right endpoint at the domain end
            let last = knots[knots.len() - 1];
            let hit = if (t - last).abs() < 1e-12 && (knots[i + 1] - last).abs() < 1e-12 {
                t >= knots[i] && knots[i] < knots[i + 1]
            } else {
                t >= knots[i] && t < knots[i + 1]
            };
            return if hit { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let den1 = knots[i + d] - knots[i];
        if den1.abs() > 1e-15 {
            v += (t - knots[i]) / den1 * basis(knots, i, d - 1, t);
        }
        let den2 = knots[i + d + 1] - knots[i + 1];
        if den2.abs() > 1e-15 {
            v += (knots[i + d + 1] - t) / den2 * basis(knots, i + 1, d - 1, t);
        }
        v
    }

    fn oracle_eval(c: &BSplineCurve, t: f64) -> f64 {
        (0..c.ctrl.len())
            .map(|i| c.ctrl[i] * basis(&c.knots, i, c.degree, t))
            .sum()
    }

    fn random_quintic(rng: &mut ChaCha8Rng) -> BSplineCurve {
        // clamped quintic with a few interior knots
        let interior = [0.25, 0.5, 0.5, 0.75];
        let mut knots = vec![0.0; 6];
        knots.extend_from_slice(&interior);
        knots.extend(vec![1.0; 6]);
        let ctrl = (0..knots.len() - 6).map(|_| rng.random_range(-2.0..2.0)).collect();
        BSplineCurve {
            degree: 5,
            knots,
            ctrl,
        }
    }

    #[test]
    fn bezier_quadratic_peak() {
        let c = BSplineCurve {
            degree: 2,
            knots: vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
            ctrl: vec![0.0, 1.0, 0.0],
        };
        assert_abs_diff_eq!(c.eval(0.5).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn constant_control_points_give_constant_curve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = random_quintic(&mut rng);
        c.ctrl.iter_mut().for_each(|p| *p = 0.7);
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            assert_abs_diff_eq!(c.eval(t).unwrap(), 0.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn eval_matches_recursive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let c = random_quintic(&mut rng);
            for k in 0..=100 {
                let t = k as f64 / 100.0;
                assert_abs_diff_eq!(c.eval(t).unwrap(), oracle_eval(&c, t), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_quintic(&mut rng);
        for k in 0..=500 {
            let t = k as f64 / 500.0;
            let sum: f64 = (0..c.ctrl.len())
                .map(|i| basis(&c.knots, i, c.degree, t))
                .sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn domain_error_outside() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random_quintic(&mut rng);
        assert!(matches!(c.eval(1.5), Err(Error::DomainError(_))));
        assert!(matches!(c.eval(-0.5), Err(Error::DomainError(_))));
    }

    #[test]
    fn poly_to_bspline_constant_and_linear() {
        let constant = PolynomialCurve {
            coeffs: vec![0.4],
            domain: (0.0, 1.0),
        };
        let c = BSplineCurve::from_polynomial(&constant, 3).unwrap();
        assert!(c.ctrl.iter().all(|&p| (p - 0.4).abs() < 1e-12));

        let lin = PolynomialCurve {
            coeffs: vec![0.0, 1.0],
            domain: (0.0, 1.0),
        };
        let c = BSplineCurve::from_polynomial(&lin, 1).unwrap();
        assert_eq!(c.ctrl, vec![0.0, 1.0]);
    }

    #[test]
    fn poly_to_bspline_random_quintic_matches_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let coeffs: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = PolynomialCurve {
                coeffs,
                domain: (0.0, 1.0),
            };
            let c = BSplineCurve::from_polynomial(&p, 5).unwrap();
            for k in 0..=50 {
                let t = k as f64 / 50.0;
                assert_abs_diff_eq!(c.eval(t).unwrap(), p.eval(t), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn poly_degree_error() {
        let p = PolynomialCurve {
            coeffs: vec![0.0; 7],
            domain: (0.0, 1.0),
        };
        assert!(matches!(
            BSplineCurve::from_polynomial(&p, 5),
            Err(Error::DegreeError(6, 5))
        ));
    }

    #[test]
    fn knot_insertion_preserves_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = random_quintic(&mut rng);
        let c2 = c.insert_knot(0.37).unwrap();
        assert_eq!(c2.ctrl.len(), c.ctrl.len() + 1);
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            assert_abs_diff_eq!(c.eval(t).unwrap(), c2.eval(t).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn triple_knot_insertion_preserves_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = random_quintic(&mut rng);
        let mut c3 = c.clone();
        for _ in 0..3 {
            c3 = c3.insert_knot(0.6).unwrap();
        }
        let mult = c3.knots.iter().filter(|&&k| (k - 0.6).abs() < 1e-12).count();
        assert_eq!(mult, 3);
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            assert_abs_diff_eq!(c.eval(t).unwrap(), c3.eval(t).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn knot_multiplicity_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = random_quintic(&mut rng);
        let mut c5 = c;
        for _ in 0..5 {
            c5 = c5.insert_knot(0.4).unwrap();
        }
        assert!(matches!(
            c5.insert_knot(0.4),
            Err(Error::KnotMultiplicityError(_))
        ));
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let p = PolynomialCurve {
            coeffs: vec![1.3],
            domain: (0.0, 1.0),
        };
        let c = BSplineCurve::from_polynomial(&p, 5).unwrap();
        let dc = c.derivative(1).unwrap();
        for k in 0..=20 {
            assert_abs_diff_eq!(dc.eval(k as f64 / 20.0).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_square() {
        let p = PolynomialCurve {
            coeffs: vec![0.0, 0.0, 1.0],
            domain: (0.0, 1.0),
        };
        let c = BSplineCurve::from_polynomial(&p, 2).unwrap();
        let dc = c.derivative(1).unwrap();
        assert_abs_diff_eq!(dc.eval(0.5).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let c = random_quintic(&mut rng);
            let dc = c.derivative(1).unwrap();
            let h = 1e-5;
            for k in 1..20 {
                let t = k as f64 / 20.0;
                let fd = (c.eval(t + h).unwrap() - c.eval(t - h).unwrap()) / (2.0 * h);
                assert!(
                    (dc.eval(t).unwrap() - fd).abs() < 1e-6,
                    "t={t}: {} vs {}",
                    dc.eval(t).unwrap(),
                    fd
                );
            }
        }
    }

    #[test]
    fn derivative_degree_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let c = random_quintic(&mut rng);
        assert!(matches!(c.derivative(6), Err(Error::DegreeError(6, 5))));
    }

    #[test]
    fn derivative_commutes_with_knot_insertion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = random_quintic(&mut rng);
        let a = c.insert_knot(0.33).unwrap().derivative(1).unwrap();
        let b = c.derivative(1).unwrap();
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            assert_abs_diff_eq!(a.eval(t).unwrap(), b.eval(t).unwrap(), epsilon = 1e-9);
        }
    }

    fn quintic_with_adaptation_knots(rng: &mut ChaCha8Rng, u_b: f64) -> BSplineCurve {
        let coeffs: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = PolynomialCurve {
            coeffs,
            domain: (0.0, 1.0),
        };
        let mut c = BSplineCurve::from_polynomial(&p, 5).unwrap();
        for _ in 0..3 {
            c = c.insert_knot(u_b).unwrap();
        }
        c
    }

    #[test]
    fn boundary_fit_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = quintic_with_adaptation_knots(&mut rng, 0.4);
        let x = c.eval(0.0).unwrap();
        let xd = c.derivative(1).unwrap().eval(0.0).unwrap();
        let xdd = c.derivative(2).unwrap().eval(0.0).unwrap();
        let fit = c.boundary_fit(x, xd, xdd, 0.0).unwrap();
        for (a, b) in c.ctrl.iter().zip(&fit.ctrl) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn boundary_fit_meets_targets_and_keeps_far_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let u_b = 0.4;
            let c = quintic_with_adaptation_knots(&mut rng, u_b);
            let x = c.eval(0.0).unwrap() + 0.3;
            let xd = c.derivative(1).unwrap().eval(0.0).unwrap() - 0.1;
            let xdd = c.derivative(2).unwrap().eval(0.0).unwrap() + 0.5;
            let fit = c.boundary_fit(x, xd, xdd, 0.0).unwrap();
            assert_abs_diff_eq!(fit.eval(0.0).unwrap(), x, epsilon = 1e-9);
            assert_abs_diff_eq!(fit.derivative(1).unwrap().eval(0.0).unwrap(), xd, epsilon = 1e-9);
            assert_abs_diff_eq!(
                fit.derivative(2).unwrap().eval(0.0).unwrap(),
                xdd,
                epsilon = 1e-9
            );
            // beyond the far breakpoint the curve is unchanged
            for k in 0..=60 {
                let t = u_b + (1.0 - u_b) * k as f64 / 60.0;
                assert_abs_diff_eq!(fit.eval(t).unwrap(), c.eval(t).unwrap(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn boundary_fit_interior_breakpoint() {
        // triple knots at both boundaries of an interior adaptation interval
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let coeffs: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = PolynomialCurve {
            coeffs,
            domain: (0.0, 1.0),
        };
        let mut c = BSplineCurve::from_polynomial(&p, 5).unwrap();
        let (u_a, u_b) = (0.3, 0.7);
        for _ in 0..3 {
            c = c.insert_knot(u_a).unwrap();
            c = c.insert_knot(u_b).unwrap();
        }
        let x = c.eval(u_a).unwrap() + 0.2;
        let xd = c.derivative(1).unwrap().eval(u_a).unwrap();
        let xdd = c.derivative(2).unwrap().eval(u_a).unwrap();
        let fit = c.boundary_fit(x, xd, xdd, u_a).unwrap();
        assert_abs_diff_eq!(fit.eval(u_a).unwrap(), x, epsilon = 1e-9);
        // unchanged beyond the far breakpoint
        for k in 0..=30 {
            let t = u_b + (1.0 - u_b) * k as f64 / 30.0;
            assert_abs_diff_eq!(fit.eval(t).unwrap(), c.eval(t).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn polynomial_fit_recovers_cubic() {
        let p = PolynomialCurve {
            coeffs: vec![0.2, -1.0, 0.5, 2.0],
            domain: (0.0, 1.0),
        };
        let ts: Vec<f64> = (0..40).map(|k| k as f64 / 39.0).collect();
        let ys: Vec<f64> = ts.iter().map(|&t| p.eval(t)).collect();
        let fit = PolynomialCurve::fit(&ts, &ys, 3);
        for (a, b) in p.coeffs.iter().zip(&fit.coeffs) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }
}
