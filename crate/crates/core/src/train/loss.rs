use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Regression losses on the error `e = prediction - target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossId {
    Mse,
    Mae,
    Huber { delta: f64 },
    LogCosh,
}

impl LossId {
    pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

    /// The four losses with default settings, in report column order.
    pub const ALL: [LossId; 4] = [
        LossId::Mse,
        LossId::Mae,
        LossId::Huber {
            delta: Self::DEFAULT_HUBER_DELTA,
        },
        LossId::LogCosh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossId::Mse => "mse",
            LossId::Mae => "mae",
            LossId::Huber { .. } => "huber",
            LossId::LogCosh => "logcosh",
        }
    }

    pub fn huber(delta: f64) -> Result<LossId> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("huber delta must be positive, got {delta}")));
        }
        Ok(LossId::Huber { delta })
    }

    /// Non-differentiable points of the loss in `e` (excluded from gradient checks).
    pub fn kinks(self) -> Vec<f64> {
        match self {
            LossId::Mae => vec![0.0],
            LossId::Huber { delta } => vec![-delta, delta],
            LossId::Mse | LossId::LogCosh => Vec::new(),
        }
    }
}

impl fmt::Display for LossId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossId::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown loss {s:?} (mse, mae, huber, logcosh)")))
    }
}

/// `log(cosh(e))` without overflow for large `|e|`.
pub fn log_cosh(e: f64) -> f64 {
    let a = e.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Loss value and derivative with respect to the prediction.
pub fn loss_and_grad(loss: LossId, pred: f64, target: f64) -> Result<(f64, f64)> {
    if !pred.is_finite() || !target.is_finite() {
        return Err(Error::invalid(format!(
            "loss needs finite inputs, got prediction {pred}, target {target}"
        )));
    }
    let e = pred - target;
    Ok(match loss {
        LossId::Mse => (e * e, 2.0 * e),
        LossId::Mae => {
            let g = if e > 0.0 {
                1.0
            } else if e < 0.0 {
                -1.0
            } else {
                0.0
            };
            (e.abs(), g)
        }
        LossId::Huber { delta } => {
            if e.abs() <= delta {
                (0.5 * e * e, e)
            } else {
                (delta * (e.abs() - 0.5 * delta), delta * e.signum())
            }
        }
        LossId::LogCosh => (log_cosh(e), e.tanh()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(loss: LossId, e: f64) -> (f64, f64) {
        loss_and_grad(loss, e, 0.0).unwrap()
    }

    #[test]
    fn huber_regions() {
        let h = LossId::huber(1.0).unwrap();
        assert_eq!(at(h, 0.5), (0.125, 0.5));
        assert_eq!(at(h, 2.0), (1.5, 1.0));
        assert_eq!(at(h, -2.0), (1.5, -1.0));
    }

    #[test]
    fn huber_continuous_at_delta() {
        for delta in [0.3, 1.0, 2.5] {
            let h = LossId::huber(delta).unwrap();
            for side in [1.0, -1.0] {
                let (v_in, g_in) = at(h, side * delta * (1.0 - 1e-12));
                let (v_out, g_out) = at(h, side * delta * (1.0 + 1e-12));
                assert!((v_in - v_out).abs() < 1e-9);
                assert!((g_in - g_out).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn logcosh_values() {
        assert_eq!(at(LossId::LogCosh, 0.0), (0.0, 0.0));
        let (v, g) = at(LossId::LogCosh, 50.0);
        assert!((v - (50.0 - std::f64::consts::LN_2)).abs() < 1e-9);
        assert_eq!(g, 1.0);
        let (v, _) = at(LossId::LogCosh, 1e6);
        assert!(v.is_finite());
        assert!((log_cosh(30.0) - (30.0 - std::f64::consts::LN_2)).abs() < 1e-12);
        assert!((log_cosh(1.0) - 1f64.cosh().ln()).abs() < 1e-15);
    }

    #[test]
    fn logcosh_below_abs() {
        for i in -100..=100 {
            let e = i as f64 * 0.173;
            assert!(log_cosh(e) <= e.abs());
        }
    }

    #[test]
    fn mae_and_mse() {
        assert_eq!(at(LossId::Mae, 0.0), (0.0, 0.0));
        assert_eq!(at(LossId::Mae, -3.0), (3.0, -1.0));
        assert_eq!(at(LossId::Mse, -3.0), (9.0, -6.0));
        assert_eq!(loss_and_grad(LossId::Mse, 5.0, 2.0).unwrap(), (9.0, 6.0));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(loss_and_grad(LossId::Mse, f64::NAN, 0.0).is_err());
        assert!(loss_and_grad(LossId::Mae, 0.0, f64::INFINITY).is_err());
        assert!(LossId::huber(0.0).is_err());
    }

    #[test]
    fn names() {
        for l in LossId::ALL {
            assert_eq!(l.name().parse::<LossId>().unwrap(), l);
        }
    }
}
