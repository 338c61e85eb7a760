//! Float helpers that build without `std` (through `libm`).

pub(crate) const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

// Platform float routines with `std`, the portable `libm` ports without.
macro_rules! float_fn {
    ($name:ident, $libm:ident, $std:ident $(, $arg:ident)*) => {
        #[cfg(any(test, feature = "std"))]
        #[inline]
        pub(crate) fn $name(x: f64 $(, $arg: f64)*) -> f64 {
            x.$std($($arg),*)
        }

        #[cfg(not(any(test, feature = "std")))]
        #[inline]
        pub(crate) fn $name(x: f64 $(, $arg: f64)*) -> f64 {
            libm::$libm(x $(, $arg)*)
        }
    };
}

float_fn!(exp, exp, exp);
float_fn!(ln, log, ln);
float_fn!(sqrt, sqrt, sqrt);
float_fn!(powf, pow, powf, y);
float_fn!(round, round, round);

#[inline]
pub(crate) fn powi(x: f64, n: i32) -> f64 {
    powf(x, n as f64)
}

#[inline]
pub(crate) fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Standard normal CDF.
#[inline]
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / core::f64::consts::SQRT_2))
}

/// Neumaier-compensated running sum. Deterministic for a fixed input order.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = KahanSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}
