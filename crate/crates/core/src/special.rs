//! Special functions on the real line: log-gamma, the half-integer gamma
//! ratio, the Riemann zeta function and compensated summation.

use num_complex::Complex64;
use std::f64::consts::PI;

/// `B_{2k} / (2k (2k - 1))` for k = 1..=7, the Stirling series coefficients.
const STIRLING: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
];

/// Even Bernoulli numbers B_2 ..= B_14.
const BERNOULLI_EVEN: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

const STIRLING_MIN: f64 = 10.0;

/// Tail of the Stirling series, `Σ B_{2k} / (2k(2k-1) z^{2k-1})`, for z ≥ 10.
fn stirling_tail(z: f64) -> f64 {
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in STIRLING.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

/// Natural logarithm of Γ(x) for x > 0.
///
/// Arguments below 10 are shifted upward with the recurrence Γ(x+1) = xΓ(x)
/// and the Stirling series is evaluated there; relative accuracy is at the
/// level of a few ulp away from the zeros at x = 1, 2.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires a positive argument, got {x}");
    let mut z = x;
    let mut prod = 1.0;
    while z < STIRLING_MIN {
        prod *= z;
        z += 1.0;
    }
    let base = (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + stirling_tail(z);
    base - prod.ln()
}

/// ln n! for nonnegative integers. Exact products are used while they fit.
pub fn ln_factorial(n: u64) -> f64 {
    if n <= 20 {
        let mut f = 1u64;
        for i in 2..=n {
            f *= i;
        }
        (f as f64).ln()
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// ln[Γ(j + 1/2) / Γ(j + 1)] for integer j ≥ 0, free of the cancellation
/// that subtracting two large log-gammas would incur.
pub fn ln_gamma_ratio_half(j: u64) -> f64 {
    if j < 32 {
        // Γ(j+½)/Γ(j+1) = √π Π_{s=1}^{j} (2s-1)/(2s)
        let mut r = 1.0;
        for s in 1..=j {
            r *= (2 * s - 1) as f64 / (2 * s) as f64;
        }
        return 0.5 * PI.ln() + r.ln();
    }
    let x = j as f64;
    let main = -0.5 * x.ln() + x * (0.5 / x).ln_1p() - (x + 0.5) * (1.0 / x).ln_1p() + 0.5;
    main + stirling_tail(x + 0.5) - stirling_tail(x + 1.0)
}

/// Riemann zeta function for real s ≠ 1 by Euler–Maclaurin summation.
///
/// For s < 1 this is the analytic continuation, not the (divergent)
/// Dirichlet series.
pub fn zeta(s: f64) -> f64 {
    assert!(s != 1.0, "zeta has a pole at s = 1");
    const HEAD: usize = 12;
    let n = HEAD as f64;
    let mut sum = Neumaier::default();
    for i in 1..HEAD {
        sum.add((i as f64).powf(-s));
    }
    sum.add(n.powf(1.0 - s) / (s - 1.0));
    sum.add(0.5 * n.powf(-s));
    // rising product s(s+1)...(s+2k-2) / (2k)!
    let mut rising = s;
    let mut fact = 2.0;
    let mut power = n.powf(-s - 1.0);
    for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
        let k = k + 1;
        sum.add(b / fact * rising * power);
        let a = 2.0 * k as f64;
        rising *= (s + a - 1.0) * (s + a);
        fact *= (a + 1.0) * (a + 2.0);
        power /= n * n;
    }
    sum.value()
}

/// Neumaier compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Componentwise compensated accumulator for complex sums.
#[derive(Clone, Copy, Debug, Default)]
pub struct ComplexNeumaier {
    re: Neumaier,
    im: Neumaier,
}

impl ComplexNeumaier {
    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    #[inline]
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

impl FromIterator<f64> for Neumaier {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Neumaier::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

impl FromIterator<Complex64> for ComplexNeumaier {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        let mut acc = ComplexNeumaier::default();
        for z in iter {
            acc.add(z);
        }
        acc
    }
}
