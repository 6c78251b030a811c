//! Small numeric helpers shared across modules.

/// Neumaier-compensated accumulator. The correction term also tracks
/// cancellation when the running sum is smaller than the addend.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    s: f64,
    c: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// Aitken Δ² extrapolation of the last three terms of a sequence assumed to
/// behave like `x_k = L + c r^k`. Returns `None` when the differences do not
/// contract (|Δ2| >= |Δ1|) or degenerate.
pub(crate) fn aitken_limit(x0: f64, x1: f64, x2: f64) -> Option<f64> {
    let d1 = x1 - x0;
    let d2 = x2 - x1;
    let den = d2 - d1;
    if den == 0.0 || !den.is_finite() || d2.abs() >= d1.abs() {
        return None;
    }
    Some(x2 - d2 * d2 / den)
}
