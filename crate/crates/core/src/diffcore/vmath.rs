//! Vectorizable transcendentals for the hot gate-activation paths.
//!
//! Branch-free polynomial `exp` in the Cephes style, accurate to a couple of
//! ulp over the full double range, with `sigmoid`/`tanh` built on top. The
//! slice forms compile to packed SIMD; the recurrent layers spend most of
//! their non-matmul time here.

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_457_519_531_25e-1;
const LN2_LO: f64 = 1.428_606_820_309_417_2e-6;

const P0: f64 = 1.261_771_930_748_105_9e-4;
const P1: f64 = 3.029_944_077_074_419_6e-2;
const P2: f64 = 9.999_999_999_999_999_9e-1;
const Q0: f64 = 3.001_985_051_386_644_55e-6;
const Q1: f64 = 2.524_483_403_496_841e-3;
const Q2: f64 = 2.272_655_482_081_550_3e-1;
const Q3: f64 = 2.0;

/// exp(x) for x in [-708, 709]; callers clamp. Rational minimax on the
/// reduced argument, then an exponent-field scale by 2^n.
#[inline]
fn exp_core(x: f64) -> f64 {
    let n = (LOG2E * x + 0.5).floor();
    let r = x - n * LN2_HI - n * LN2_LO;
    let rr = r * r;
    let p = r * ((P0 * rr + P1) * rr + P2);
    let q = ((Q0 * rr + Q1) * rr + Q2) * rr + Q3;
    let e = 1.0 + 2.0 * p / (q - p);
    let scale = f64::from_bits((((n as i64) + 1023) as u64) << 52);
    e * scale
}

#[inline]
pub fn fast_exp(x: f64) -> f64 {
    exp_core(x.clamp(-708.0, 709.0))
}

/// Logistic function; exact at 0, saturates cleanly at the range ends.
#[inline]
pub fn fast_sigmoid(x: f64) -> f64 {
    let e = exp_core((-x.abs()).max(-708.0));
    let inv = 1.0 / (1.0 + e);
    if x >= 0.0 {
        inv
    } else {
        e * inv
    }
}

/// tanh via exp(-2|x|); odd symmetry restored with copysign.
#[inline]
pub fn fast_tanh(x: f64) -> f64 {
    let e = exp_core((-2.0 * x.abs()).max(-708.0));
    let t = (1.0 - e) / (1.0 + e);
    t.copysign(x)
}

/// Four-lane exp on pre-clamped arguments; straight-line array code so the
/// whole pipeline compiles to packed instructions.
#[inline(always)]
fn exp4(x: [f64; 4]) -> [f64; 4] {
    let mut n = [0.0; 4];
    let mut r = [0.0; 4];
    for i in 0..4 {
        let xc = x[i].clamp(-708.0, 709.0);
        n[i] = (LOG2E * xc + 0.5).floor();
        r[i] = xc - n[i] * LN2_HI - n[i] * LN2_LO;
    }
    let mut out = [0.0; 4];
    for i in 0..4 {
        let rr = r[i] * r[i];
        let p = r[i] * ((P0 * rr + P1) * rr + P2);
        let q = ((Q0 * rr + Q1) * rr + Q2) * rr + Q3;
        let e = 1.0 + 2.0 * p / (q - p);
        let scale = f64::from_bits((((n[i] as i64) + 1023) as u64) << 52);
        out[i] = e * scale;
    }
    out
}

pub fn sigmoid_slice(x: &mut [f64]) {
    let mut chunks = x.chunks_exact_mut(4);
    for c in &mut chunks {
        let e = exp4([-c[0].abs(), -c[1].abs(), -c[2].abs(), -c[3].abs()]);
        for i in 0..4 {
            let inv = 1.0 / (1.0 + e[i]);
            c[i] = if c[i] >= 0.0 { inv } else { e[i] * inv };
        }
    }
    for v in chunks.into_remainder() {
        *v = fast_sigmoid(*v);
    }
}

pub fn tanh_slice(x: &mut [f64]) {
    let mut chunks = x.chunks_exact_mut(4);
    for c in &mut chunks {
        let e = exp4([
            -2.0 * c[0].abs(),
            -2.0 * c[1].abs(),
            -2.0 * c[2].abs(),
            -2.0 * c[3].abs(),
        ]);
        for i in 0..4 {
            c[i] = ((1.0 - e[i]) / (1.0 + e[i])).copysign(c[i]);
        }
    }
    for v in chunks.into_remainder() {
        *v = fast_tanh(*v);
    }
}

/// out[i] = tanh(x[i]).
pub fn tanh_to(x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), out.len());
    let n4 = x.len() / 4 * 4;
    let mut i = 0;
    while i < n4 {
        let e = exp4([
            -2.0 * x[i].abs(),
            -2.0 * x[i + 1].abs(),
            -2.0 * x[i + 2].abs(),
            -2.0 * x[i + 3].abs(),
        ]);
        for j in 0..4 {
            out[i + j] = ((1.0 - e[j]) / (1.0 + e[j])).copysign(x[i + j]);
        }
        i += 4;
    }
    while i < x.len() {
        out[i] = fast_tanh(x[i]);
        i += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_matches_libm() {
        let mut worst = 0.0f64;
        for i in 0..200_000 {
            let x = -700.0 + i as f64 * (1400.0 / 200_000.0);
            let got = fast_exp(x);
            let want = x.exp();
            let rel = if want == 0.0 {
                got.abs()
            } else {
                ((got - want) / want).abs()
            };
            worst = worst.max(rel);
        }
        assert!(worst < 5e-15, "worst rel err {worst}");
    }

    #[test]
    fn sigmoid_and_tanh_match_libm() {
        let mut worst_s = 0.0f64;
        let mut worst_t = 0.0f64;
        for i in 0..100_000 {
            let x = -40.0 + i as f64 * (80.0 / 100_000.0);
            let s = fast_sigmoid(x);
            let s_ref = 1.0 / (1.0 + (-x).exp());
            worst_s = worst_s.max((s - s_ref).abs());
            let t = fast_tanh(x);
            worst_t = worst_t.max((t - x.tanh()).abs());
        }
        assert!(worst_s < 1e-15, "sigmoid abs err {worst_s}");
        assert!(worst_t < 1e-14, "tanh abs err {worst_t}");
        assert_eq!(fast_sigmoid(0.0), 0.5);
        assert_eq!(fast_tanh(0.0), 0.0);
        assert!(fast_tanh(900.0) == 1.0 || fast_tanh(900.0) > 0.999_999_999);
        assert!((fast_tanh(0.5) - 0.462_117_157_260_009_76).abs() < 1e-15);
    }
}
