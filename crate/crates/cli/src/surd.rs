//! Closed-form labels for exponents at integer-radicand weights.
//!
//! Both `xi` and `xi_tilde` have the shape `((S - p)^2 - q) / D` with
//! `S = sum sqrt(24 w_j + 1)`. When every radicand is an integer and the
//! square-free parts agree, `S = m sqrt(d)` and the value is
//! `(m^2 d + p^2 - q - 2 m p sqrt(d)) / D`, printed in lowest terms.

/// Splits `n` as `c^2 d` with `d` square-free.
fn square_free(mut n: u64) -> (u64, u64) {
    let mut c = 1;
    let mut d = 1;
    let mut f = 2;
    while f * f <= n {
        let mut e = 0;
        while n % f == 0 {
            n /= f;
            e += 1;
        }
        c *= f.pow(e / 2);
        if e % 2 == 1 {
            d *= f;
        }
        f += 1;
    }
    (c, d * n)
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// `24 w + 1` as an integer, if it is one.
fn radicand(w: f64) -> Option<u64> {
    let r = 24.0 * w + 1.0;
    (r.is_finite() && r >= 1.0 && r < 1e12 && (r - r.round()).abs() < 1e-9).then(|| r.round() as u64)
}

fn fraction(num: i128, den: i128) -> String {
    let g = gcd(num, den);
    let (n, d) = (num / g, den / g);
    if d == 1 {
        n.to_string()
    } else {
        format!("{n}/{d}")
    }
}

fn label(weights: &[f64], p: i128, q: i128, den: i128) -> Option<String> {
    let mut m: i128 = 0;
    let mut common = None;
    for &w in weights {
        let (c, d) = square_free(radicand(w)?);
        if *common.get_or_insert(d) != d {
            return None;
        }
        m += c as i128;
    }
    let d = common? as i128;
    if d == 1 {
        return Some(fraction((m - p).pow(2) - q, den));
    }
    let a = m * m * d + p * p - q;
    let b = 2 * m * p;
    let g = gcd(gcd(a, b), den);
    let (a, b, den) = (a / g, b / g, den / g);
    let coeff = if b == 1 { String::new() } else { b.to_string() };
    let body = if b == 0 { a.to_string() } else { format!("{a}\u{2212}{coeff}\u{221a}{d}") };
    Some(if den == 1 { body } else { format!("({body})/{den}") })
}

/// Label for `xi(w_1, ..., w_k) = ((S - k)^2 - 4) / 48`.
pub fn xi_label(weights: &[f64]) -> Option<String> {
    label(weights, weights.len() as i128, 4, 48)
}

/// Label for `xi_tilde(w_1, ..., w_k) = ((S - (k - 1))^2 - 1) / 24`.
pub fn xi_tilde_label(weights: &[f64]) -> Option<String> {
    label(weights, weights.len() as i128 - 1, 1, 24)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_labels() {
        assert_eq!(xi_label(&[3.0, 3.0]).unwrap(), "(73\u{2212}2\u{221a}73)/12");
        assert_eq!(xi_label(&[1.0, 1.0]).unwrap(), "5/4");
        assert_eq!(xi_tilde_label(&[1.0, 1.0]).unwrap(), "10/3");
        assert_eq!(xi_tilde_label(&[1.0, 1.0, 2.0]).unwrap(), "28/3");
        assert_eq!(xi_tilde_label(&[1.0, 1.0, 1.0]).unwrap(), "7");
        assert_eq!(xi_tilde_label(&[2.0]).unwrap(), "2");
    }

    #[test]
    fn mixed_radicands_have_no_label() {
        assert_eq!(xi_label(&[3.0, 1.0]), None);
        assert_eq!(xi_label(&[0.3, 1.0]), None);
    }

    #[test]
    fn label_matches_value() {
        // Radicands 73 and 292 = 4 * 73 share the square-free part 73.
        let w = [3.0, 291.0 / 24.0];
        let s = 3.0 * 73f64.sqrt();
        let v = ((s - 2.0).powi(2) - 4.0) / 48.0;
        let l = xi_label(&w).unwrap();
        assert_eq!(l, "(219\u{2212}4\u{221a}73)/16");
        assert!(((219.0 - 4.0 * 73f64.sqrt()) / 16.0 - v).abs() < 1e-12);
    }

    #[test]
    fn square_free_parts() {
        assert_eq!(square_free(73), (1, 73));
        assert_eq!(square_free(292), (2, 73));
        assert_eq!(square_free(49), (7, 1));
        assert_eq!(square_free(72), (6, 2));
    }
}
