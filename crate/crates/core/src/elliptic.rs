//! Jacobi elliptic functions and incomplete elliptic integrals of the first
//! kind. Both take the modulus `k` (not the parameter `m = k²`).

use crate::error::{Error, Result};

const AGM_MAX_STEPS: usize = 64;

/// `(sn, cn, dn)` of `u` for modulus `0 <= k <= 1`, by the descending
/// Landen (arithmetic-geometric mean) scheme.
pub fn jacobi_sn_cn_dn(u: f64, k: f64) -> Result<(f64, f64, f64)> {
    if !(0.0..=1.0).contains(&k) || !u.is_finite() {
        return Err(Error::invalid(format!("elliptic modulus {k} outside [0, 1] or bad argument {u}")));
    }
    if k == 0.0 {
        return Ok((u.sin(), u.cos(), 1.0));
    }
    let kc2 = (1.0 - k) * (1.0 + k);
    if kc2 <= 0.0 {
        let s = 1.0 / u.cosh();
        return Ok((u.tanh(), s, s));
    }

    let mut a = [0.0; AGM_MAX_STEPS + 1];
    let mut c = [0.0; AGM_MAX_STEPS + 1];
    a[0] = 1.0;
    c[0] = k;
    let mut b = kc2.sqrt();
    let mut n = 0;
    while c[n].abs() > f64::EPSILON * a[n] {
        if n == AGM_MAX_STEPS {
            return Err(Error::invalid("AGM iteration did not settle"));
        }
        let (an, bn) = (a[n], b);
        a[n + 1] = 0.5 * (an + bn);
        c[n + 1] = 0.5 * (an - bn);
        b = (an * bn).sqrt();
        n += 1;
    }

    let mut phi = (1u64 << n) as f64 * a[n] * u;
    let mut prev = phi;
    for j in (1..=n).rev() {
        prev = phi;
        phi = 0.5 * (phi + (c[j] / a[j] * phi.sin()).asin());
    }
    let (sn, cn) = phi.sin_cos();
    let dn = if n == 0 { 1.0 } else { cn / (prev - phi).cos() };
    Ok((sn, cn, dn))
}

pub fn jacobi_sn(u: f64, k: f64) -> Result<f64> {
    jacobi_sn_cn_dn(u, k).map(|(s, _, _)| s)
}

/// Carlson's symmetric integral `R_F(x, y, z)`; at most one argument may be
/// zero.
pub fn carlson_rf(x: f64, y: f64, z: f64) -> f64 {
    let (mut x, mut y, mut z) = (x, y, z);
    let mut mu;
    loop {
        mu = (x + y + z) / 3.0;
        let dx = 1.0 - x / mu;
        let dy = 1.0 - y / mu;
        let dz = 1.0 - z / mu;
        if dx.abs().max(dy.abs()).max(dz.abs()) < 1e-4 {
            let e2 = dx * dy - dz * dz;
            let e3 = dx * dy * dz;
            return (1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0) / mu.sqrt();
        }
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lambda = sx * (sy + sz) + sy * sz;
        x = 0.25 * (x + lambda);
        y = 0.25 * (y + lambda);
        z = 0.25 * (z + lambda);
    }
}

/// Incomplete integral `F(φ, k)` for `|φ| <= π/2`.
pub fn elliptic_f(phi: f64, k: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    s * carlson_rf(c * c, (1.0 - k * s) * (1.0 + k * s), 1.0)
}

/// Complete integral `K(k)`; infinite at `k = 1`.
pub fn elliptic_k(k: f64) -> f64 {
    if k >= 1.0 {
        return f64::INFINITY;
    }
    carlson_rf(0.0, (1.0 - k) * (1.0 + k), 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    /// Composite Gauss–Legendre (5-point) quadrature of the defining integral.
    fn f_by_quadrature(phi: f64, k: f64) -> f64 {
        const X: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
        const W: [f64; 5] = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];
        let panels = 400;
        let h = phi / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (x, w) in X.iter().zip(W) {
                let th = mid + 0.5 * h * x;
                total += w * 0.5 * h / (1.0 - k * k * th.sin().powi(2)).sqrt();
            }
        }
        total
    }

    #[test]
    fn reference_values() {
        let cases = [
            (0.7, 0.5, 0.634_293_276_335_112_4, 0.773_092_516_841_334_3, 0.948_376_512_730_580_6),
            (2.3, 0.9, 0.999_964_054_622_227_4, -0.008_478_765_445_220_732, 0.435_956_684_161_872_6),
            (5.0, 0.999, 0.999_723_454_245_097_4, -0.023_516_271_648_597_47, 0.050_506_529_827_351_37),
            (1.1, 0.3, 0.884_002_981_059_476_2, 0.467_481_261_098_195_7, 0.964_193_178_597_015_6),
        ];
        for (u, k, sn, cn, dn) in cases {
            let (s, c, d) = jacobi_sn_cn_dn(u, k).unwrap();
            assert_abs_diff_eq!(s, sn, epsilon = 1e-13);
            assert_abs_diff_eq!(c, cn, epsilon = 1e-12);
            assert_abs_diff_eq!(d, dn, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(elliptic_f(0.9, 0.6), 0.941_701_578_051_126_9, epsilon = 1e-14);
        assert_abs_diff_eq!(elliptic_f(1.5, 0.99), 2.873_365_506_412_245, epsilon = 1e-13);
        assert_abs_diff_eq!(elliptic_k(0.9), 2.280_549_138_422_770_3, epsilon = 1e-14);
    }

    #[test]
    fn degenerate_moduli() {
        for &u in &[-3.0, -0.2, 0.0, 0.8, 4.0] {
            assert_abs_diff_eq!(jacobi_sn(u, 0.0).unwrap(), f64::sin(u), epsilon = 1e-15);
            assert_abs_diff_eq!(jacobi_sn(u, 1.0).unwrap(), f64::tanh(u), epsilon = 1e-15);
        }
        assert_abs_diff_eq!(elliptic_k(0.0), FRAC_PI_2, epsilon = 1e-15);
        assert!(jacobi_sn(1.0, 1.2).is_err());
    }

    #[test]
    fn f_matches_quadrature() {
        for &k in &[0.0, 0.3, 0.8, 0.97] {
            for &phi in &[0.1, 0.7, 1.3, FRAC_PI_2 - 1e-3] {
                assert_abs_diff_eq!(elliptic_f(phi, k), f_by_quadrature(phi, k), epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn sn_of_quarter_period_is_one() {
        for &k in &[0.1, 0.5, 0.9, 0.999_9] {
            assert_abs_diff_eq!(jacobi_sn(elliptic_k(k), k).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sn_inverts_f(phi in -1.5f64..1.5, k in 0.0f64..0.999) {
                let u = f_by_quadrature(phi, k);
                prop_assert!((jacobi_sn(u, k).unwrap() - phi.sin()).abs() < 1e-10);
            }

            #[test]
            fn pythagorean_identities(u in -20.0f64..20.0, k in 0.0f64..1.0) {
                let (s, c, d) = jacobi_sn_cn_dn(u, k).unwrap();
                prop_assert!((s * s + c * c - 1.0).abs() < 1e-12);
                prop_assert!((d * d + k * k * s * s - 1.0).abs() < 1e-10);
            }
        }
    }
}
