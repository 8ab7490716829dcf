//! Central finite-difference gradient checks in 64-bit mode.

use crate::params::ParamStore;
use crate::tape::{Tape, Var};

#[derive(Clone, Debug)]
pub struct GroupReport {
    pub name: String,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` over checked entries.
    pub rel_err: f64,
    pub checked: usize,
    /// Entries whose perturbation flipped a ReLU sign (finite differences
    /// are meaningless across a kink).
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GroupReport> {
        self.groups
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    pub fn skipped(&self) -> usize {
        self.groups.iter().map(|g| g.skipped).sum()
    }

    pub fn checked(&self) -> usize {
        self.groups.iter().map(|g| g.checked).sum()
    }
}

/// Compares the tape gradient of the scalar produced by `f` with central
/// differences of step `h`, checking at most `max_per_group` evenly strided
/// entries of every parameter.
pub fn check_gradients<F>(
    store: &ParamStore<f64>,
    h: f64,
    max_per_group: usize,
    f: F,
) -> GradCheckReport
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Var,
{
    let mut tape = Tape::with_kink_trace();
    let root = f(&mut tape, store);
    let analytic = tape.backward(root);
    let base_trace = tape.kink_trace().unwrap_or_default().to_vec();

    let eval = |s: &ParamStore<f64>| -> (f64, Vec<bool>) {
        let mut t = Tape::with_kink_trace();
        let r = f(&mut t, s);
        (
            t.value(r).item(),
            t.kink_trace().unwrap_or_default().to_vec(),
        )
    };

    let mut work = store.clone();
    let mut groups = Vec::new();
    for id in store.ids() {
        let n = store.get(id).data().len();
        let stride = n.div_ceil(max_per_group.max(1)).max(1);
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        let (mut checked, mut skipped) = (0, 0);
        for j in (0..n).step_by(stride) {
            let orig = work.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + h;
            let (fp, tp) = eval(&work);
            work.get_mut(id).data_mut()[j] = orig - h;
            let (fm, tm) = eval(&work);
            work.get_mut(id).data_mut()[j] = orig;
            if tp != base_trace || tm != base_trace {
                skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[j]);
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
            checked += 1;
        }
        let scale = a2.sqrt().max(n2.sqrt());
        let rel_err = if scale < 1e-10 {
            0.0
        } else {
            diff2.sqrt() / scale
        };
        groups.push(GroupReport {
            name: store.name(id).to_string(),
            rel_err,
            checked,
            skipped,
        });
    }
    GradCheckReport { groups }
}
