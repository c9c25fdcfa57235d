//! Shared float accumulation.

/// Neumaier-compensated accumulator. Mass and codelength sums run over
/// hundreds of thousands of terms, and bit-level reproducibility of the
/// reported totals matters more than speed here.
#[derive(Default, Clone, Copy)]
pub(crate) struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(self) -> f64 {
        self.sum + self.c
    }
}
