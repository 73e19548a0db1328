//! Activation functions with analytic first to third derivatives.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ActivationKind {
    Tanh,
    Identity,
    /// `x + (c/2) x² w(x)` with a C³ cutoff `w` (1 on [−1,1], 0 outside [−2,2]).
    QuadBump {
        c: f64,
    },
    /// ReLU mollified with a triweight kernel of half-width `eps`, shifted so
    /// that `f(0) = 0` and `f'(0) = 1`.
    SmoothRelu {
        eps: f64,
    },
    /// Exact ReLU. Not smooth at 0, so outside the smooth depth limits.
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    kind: ActivationKind,
    /// Cached σ″(0).
    pub d2_at_zero: f64,
    /// Upper bound on |σ‴| over the real line.
    pub d3_bound: f64,
}

pub fn make_activation(kind: ActivationKind) -> Result<Activation> {
    let (d2_at_zero, d3_bound) = match kind {
        ActivationKind::Tanh => (0.0, 2.0),
        ActivationKind::Identity | ActivationKind::Relu => (0.0, 0.0),
        ActivationKind::QuadBump { c } => {
            if !c.is_finite() {
                return Err(Error::invalid("c", "quad_bump curvature must be finite"));
            }
            (c, quad_bump_d3_bound(c))
        }
        ActivationKind::SmoothRelu { eps } => {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(Error::invalid("eps", "smooth_relu width must be positive"));
            }
            // sup |K'(u)| = (105/16)·(1/√5)·(4/5)²
            (0.0, 105.0 / 16.0 * 0.64 / libm::sqrt(5.0) / (eps * eps))
        }
    };
    Ok(Activation {
        kind,
        d2_at_zero,
        d3_bound,
    })
}

impl Activation {
    pub fn tanh() -> Self {
        make_activation(ActivationKind::Tanh).unwrap()
    }

    pub fn identity() -> Self {
        make_activation(ActivationKind::Identity).unwrap()
    }

    pub fn relu() -> Self {
        make_activation(ActivationKind::Relu).unwrap()
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Identity => "identity",
            ActivationKind::QuadBump { .. } => "quad_bump",
            ActivationKind::SmoothRelu { .. } => "smooth_relu",
            ActivationKind::Relu => "relu",
        }
    }

    /// Satisfies σ ∈ C³, σ(0)=0, σ′(0)=1, bounded σ‴.
    pub fn is_smooth(&self) -> bool {
        !matches!(self.kind, ActivationKind::Relu)
    }

    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Tanh => libm::tanh(x),
            ActivationKind::Identity => x,
            ActivationKind::QuadBump { c } => x + 0.5 * c * x * x * cutoff(x).0,
            ActivationKind::SmoothRelu { eps } => smooth_relu(x, eps).0,
            ActivationKind::Relu => x.max(0.0),
        }
    }

    #[inline]
    pub fn d1(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Tanh => {
                let t = libm::tanh(x);
                1.0 - t * t
            }
            ActivationKind::Identity => 1.0,
            ActivationKind::QuadBump { c } => {
                let (w, w1, _, _) = cutoff(x);
                1.0 + c * x * w + 0.5 * c * x * x * w1
            }
            ActivationKind::SmoothRelu { eps } => smooth_relu(x, eps).1,
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn d2(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Tanh => {
                let t = libm::tanh(x);
                -2.0 * t * (1.0 - t * t)
            }
            ActivationKind::Identity | ActivationKind::Relu => 0.0,
            ActivationKind::QuadBump { c } => {
                let (w, w1, w2, _) = cutoff(x);
                c * w + 2.0 * c * x * w1 + 0.5 * c * x * x * w2
            }
            ActivationKind::SmoothRelu { eps } => smooth_relu(x, eps).2,
        }
    }

    #[inline]
    pub fn d3(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Tanh => {
                let t = libm::tanh(x);
                let s = 1.0 - t * t;
                -2.0 * s * (1.0 - 3.0 * t * t)
            }
            ActivationKind::Identity | ActivationKind::Relu => 0.0,
            ActivationKind::QuadBump { c } => {
                let (_, w1, w2, w3) = cutoff(x);
                3.0 * c * w1 + 3.0 * c * x * w2 + 0.5 * c * x * x * w3
            }
            ActivationKind::SmoothRelu { eps } => smooth_relu(x, eps).3,
        }
    }
}

/// Degree-7 smoothstep `S(t) = 35t⁴ − 84t⁵ + 70t⁶ − 20t⁷` and its first
/// three derivatives; S′, S″, S‴ vanish at both ends.
#[inline]
fn smoothstep7(t: f64) -> (f64, f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0, 0.0);
    }
    let t2 = t * t;
    let t3 = t2 * t;
    let s = t2 * t2 * (35.0 - 84.0 * t + 70.0 * t2 - 20.0 * t3);
    let s1 = 140.0 * t3 * (1.0 - t) * (1.0 - t) * (1.0 - t);
    let s2 = 420.0 * t2 * (1.0 - t) * (1.0 - t) * (1.0 - 2.0 * t);
    let s3 = 840.0 * t * (1.0 - t) * (1.0 - 5.0 * t + 5.0 * t2);
    (s, s1, s2, s3)
}

/// Even cutoff `w(x) = 1 − S(|x| − 1)` with derivatives.
#[inline]
fn cutoff(x: f64) -> (f64, f64, f64, f64) {
    let ax = libm::fabs(x);
    if ax <= 1.0 {
        return (1.0, 0.0, 0.0, 0.0);
    }
    if ax >= 2.0 {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let (s, s1, s2, s3) = smoothstep7(ax - 1.0);
    (1.0 - s, -sign * s1, -s2, -sign * s3)
}

fn quad_bump_d3_bound(c: f64) -> f64 {
    let act = Activation {
        kind: ActivationKind::QuadBump { c },
        d2_at_zero: c,
        d3_bound: 0.0,
    };
    // σ‴ vanishes outside [−2, 2]; a dense sweep plus 2% margin
    let n = 20_000;
    let sup = (0..=n)
        .map(|i| libm::fabs(act.d3(-2.0 + 4.0 * i as f64 / n as f64)))
        .fold(0.0, f64::max);
    sup * 1.02
}

/// Triweight-mollified ReLU `s(y)` on `[−1, 1]` in units of the half-width,
/// evaluated at `y = x + eps` and shifted down by `eps`.
#[inline]
fn smooth_relu(x: f64, eps: f64) -> (f64, f64, f64, f64) {
    let y = x + eps;
    if y <= -eps {
        return (-eps, 0.0, 0.0, 0.0);
    }
    if y >= eps {
        return (x, 1.0, 0.0, 0.0);
    }
    let u = y / eps;
    let u2 = u * u;
    let one_m = 1.0 - u2;
    let k = 35.0 / 32.0 * one_m * one_m * one_m;
    let k1 = -105.0 / 16.0 * u * one_m * one_m;
    let cdf = 0.5 + 35.0 / 32.0 * (u - u2 * u + 0.6 * u2 * u2 * u - u2 * u2 * u2 * u / 7.0);
    let g = u / 2.0
        + 35.0 / 32.0 * (u2 / 2.0 - u2 * u2 / 4.0 + u2 * u2 * u2 / 10.0 - u2 * u2 * u2 * u2 / 56.0)
        + 35.0 / 256.0;
    (eps * g - eps, cdf, k / eps, k1 / (eps * eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth_family() -> [Activation; 5] {
        [
            Activation::tanh(),
            Activation::identity(),
            make_activation(ActivationKind::QuadBump { c: 1.5 }).unwrap(),
            make_activation(ActivationKind::QuadBump { c: -0.7 }).unwrap(),
            make_activation(ActivationKind::SmoothRelu { eps: 0.3 }).unwrap(),
        ]
    }

    #[test]
    fn normalization_at_zero() {
        for act in smooth_family() {
            assert_eq!(act.f(0.0), 0.0, "{}", act.name());
            assert!((act.d1(0.0) - 1.0).abs() < 1e-15, "{}", act.name());
            assert!(
                (act.d2(0.0) - act.d2_at_zero).abs() < 1e-15,
                "{}",
                act.name()
            );
        }
        assert_eq!(Activation::tanh().d2_at_zero, 0.0);
        let qb = make_activation(ActivationKind::QuadBump { c: 1.5 }).unwrap();
        assert_eq!(qb.d2_at_zero, 1.5);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-5;
        // fixed pseudo-random abscissae in [−3, 3]
        let xs = (0..100).map(|i| -3.0 + 6.0 * ((i as f64 * 0.618_033_988_75) % 1.0));
        for act in smooth_family() {
            for x in xs.clone() {
                let fd1 = (act.f(x + h) - act.f(x - h)) / (2.0 * h);
                let fd2 = (act.d1(x + h) - act.d1(x - h)) / (2.0 * h);
                let fd3 = (act.d2(x + h) - act.d2(x - h)) / (2.0 * h);
                assert!((act.d1(x) - fd1).abs() <= 1e-6, "{} d1 at {x}", act.name());
                assert!((act.d2(x) - fd2).abs() <= 1e-6, "{} d2 at {x}", act.name());
                assert!((act.d3(x) - fd3).abs() <= 1e-5, "{} d3 at {x}", act.name());
            }
        }
    }

    #[test]
    fn third_derivative_bound_holds() {
        for act in smooth_family() {
            for i in 0..=4000 {
                let x = -4.0 + 8.0 * i as f64 / 4000.0;
                assert!(
                    act.d3(x).abs() <= act.d3_bound + 1e-12,
                    "{} at {x}",
                    act.name()
                );
            }
        }
    }

    #[test]
    fn smooth_relu_is_within_eps_of_relu() {
        for eps in [0.5, 0.1, 0.01] {
            let act = make_activation(ActivationKind::SmoothRelu { eps }).unwrap();
            for i in 0..=100_000 {
                let x = -5.0 + 10.0 * i as f64 / 100_000.0;
                assert!((act.f(x) - x.max(0.0)).abs() <= eps * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn quad_bump_is_linear_far_away() {
        let act = make_activation(ActivationKind::QuadBump { c: 3.0 }).unwrap();
        assert_eq!(act.f(2.5), 2.5);
        assert_eq!(act.f(-7.0), -7.0);
        assert_eq!(act.f(0.5), 0.5 + 1.5 * 0.25);
    }

    #[test]
    fn invalid_parameters() {
        assert!(make_activation(ActivationKind::SmoothRelu { eps: 0.0 }).is_err());
        assert!(make_activation(ActivationKind::QuadBump { c: f64::NAN }).is_err());
        assert!(!Activation::relu().is_smooth());
    }
}
