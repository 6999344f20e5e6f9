use super::{Mode, Sequential, Tensor1D};
use crate::{Exec, Result};

/// Largest disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate where `max_rel_error` occurred.
    pub worst_index: usize,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }

    /// Combines two reports; the worst index refers to whichever side is worse.
    pub fn merge(self, other: GradCheckReport) -> GradCheckReport {
        let worst = if other.max_rel_error > self.max_rel_error {
            other
        } else {
            self
        };
        GradCheckReport {
            checked: self.checked + other.checked,
            ..worst
        }
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Compares `analytic[i]` against `(f(x + h e_i) - f(x - h e_i)) / 2h`
/// for every coordinate of `x`.
pub fn grad_check(x: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64 + Sync, h: f64) -> GradCheckReport {
    grad_check_with(Exec::Sequential, x, analytic, f, h)
}

/// [`grad_check`] with the coordinate sweep spread over `exec`.
pub fn grad_check_with(
    exec: Exec,
    x: &[f64],
    analytic: &[f64],
    f: impl Fn(&[f64]) -> f64 + Sync,
    h: f64,
) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len(), "gradient length must match the point");
    let errors = exec.map_indexed(x.len(), |i| {
        let mut probe = x.to_vec();
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        relative_error(analytic[i], (up - down) / (2.0 * h))
    });
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: x.len(),
    };
    for (i, err) in errors.into_iter().enumerate() {
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    report
}

/// Gradient checks of a network under a batch loss.
///
/// `loss` maps the batch outputs to a scalar and its gradient with respect
/// to each output. Returns the parameter report and the input report.
/// `corrupt` scales the analytic gradients, for checking the checker.
pub fn check_network(
    net: &Sequential,
    xs: &[Tensor1D],
    mode: Mode,
    loss: &(dyn Fn(&[Tensor1D]) -> (f64, Vec<Tensor1D>) + Sync),
    h: f64,
    corrupt: f64,
) -> Result<(GradCheckReport, GradCheckReport)> {
    // Layer math stays sequential; the coordinate sweep is what parallelizes.
    let exec = Exec::Sequential;
    let sweep = Exec::default();
    let (ys, tape) = net.forward_batch(xs, mode, exec)?;
    let (_, dys) = loss(&ys);
    let (dxs, dparams) = net.backward(&tape, &dys, exec)?;
    let scaled = |g: Vec<f64>| g.into_iter().map(|v| v * corrupt).collect::<Vec<_>>();

    let theta = net.params();
    let param_report = grad_check_with(
        sweep,
        &theta,
        &scaled(dparams),
        |p| {
            let mut probe = net.clone();
            probe.set_params(p).expect("parameter count is fixed");
            let (ys, _) = probe.forward_batch(xs, mode, exec).expect("shapes already validated");
            loss(&ys).0
        },
        h,
    );

    let flat_x: Vec<f64> = xs.iter().flat_map(|x| x.values().to_vec()).collect();
    let flat_dx: Vec<f64> = dxs.iter().flat_map(|d| d.values().to_vec()).collect();
    let unflatten = |v: &[f64]| {
        let mut out = Vec::with_capacity(xs.len());
        let mut off = 0;
        for x in xs {
            let n = x.values().len();
            out.push(Tensor1D::new(x.channels(), x.length(), v[off..off + n].to_vec()).expect("same shape"));
            off += n;
        }
        out
    };
    let input_report = grad_check_with(
        sweep,
        &flat_x,
        &scaled(flat_dx),
        |v| {
            let (ys, _) = net
                .forward_batch(&unflatten(v), mode, exec)
                .expect("shapes already validated");
            loss(&ys).0
        },
        h,
    );
    Ok((param_report, input_report))
}
