//! Gauss–Legendre nodes and cumulative Simpson integration.

/// Nodes and weights on `[-1, 1]`, computed by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 0 { 0.0 } else { p0 };
            dp = nf * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `∫_a^b f` with an `n`-point Gauss–Legendre rule.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let (m, r) = ((a + b) / 2.0, (b - a) / 2.0);
    x.iter().zip(&w).map(|(xi, wi)| wi * f(m + r * xi)).sum::<f64>() * r
}

/// Cumulative integral `F_i = ∫_0^{x_i} f` over a uniform grid whose node
/// `center` is `x = 0`. Even offsets use composite Simpson; odd offsets
/// start with a Simpson 3/8 panel (offset 1 uses a three-point rule).
pub fn cumulative_from_center(values: &[f64], spacing: f64, center: usize) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    // walk outward in both directions with the same scheme
    for dir in [1i64, -1i64] {
        let at = |m: usize| -> Option<f64> {
            let idx = center as i64 + dir * m as i64;
            if idx < 0 || idx >= n as i64 {
                None
            } else {
                Some(values[idx as usize])
            }
        };
        let max_m = if dir > 0 { n - 1 - center } else { center };
        let h = spacing * dir as f64;
        let mut even = 0.0;
        let mut odd = None;
        for m in 1..=max_m {
            let v = if m % 2 == 0 {
                even += h / 3.0 * (at(m - 2).unwrap() + 4.0 * at(m - 1).unwrap() + at(m).unwrap());
                even
            } else if m == 1 {
                let f0 = at(0).unwrap();
                let f1 = at(1).unwrap();
                match at(2) {
                    Some(f2) => h / 12.0 * (5.0 * f0 + 8.0 * f1 - f2),
                    None => h / 2.0 * (f0 + f1),
                }
            } else {
                let base = match odd {
                    Some(b) => b,
                    None => {
                        let s = 3.0 * h / 8.0 * (at(0).unwrap() + 3.0 * at(1).unwrap() + 3.0 * at(2).unwrap() + at(3).unwrap());
                        odd = Some(s);
                        s
                    }
                };
                if m == 3 {
                    base
                } else {
                    let mut acc = base;
                    let mut q = 3;
                    while q + 2 <= m {
                        acc += h / 3.0 * (at(q).unwrap() + 4.0 * at(q + 1).unwrap() + at(q + 2).unwrap());
                        q += 2;
                    }
                    acc
                }
            };
            let idx = (center as i64 + dir * m as i64) as usize;
            out[idx] = v;
        }
    }
    out
}
