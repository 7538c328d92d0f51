//! Truncated Taylor series in one variable, propagated through the fibre
//! map. Coefficients are normalised: `c[i] = X^{(i)}(s₀)/i!`.

/// `x ← a − x² + α·φ` on normalised Taylor coefficients.
pub fn fiber_step(x: &mut [f64], a: f64, alpha: f64, phi: &[f64], tmp: &mut [f64]) {
    let l = x.len();
    for k in 0..l {
        let mut s = 0.0;
        for i in 0..=k {
            s += x[i] * x[k - i];
        }
        tmp[k] = s;
    }
    for k in 0..l {
        let base = if k == 0 { a } else { 0.0 };
        x[k] = base - tmp[k] + alpha * phi[k];
    }
}

/// Derivatives `X^{(i)} = i!·c[i]`.
pub fn derivatives(c: &[f64]) -> Vec<f64> {
    let mut f = 1.0;
    c.iter()
        .enumerate()
        .map(|(i, v)| {
            if i > 0 {
                f *= i as f64;
            }
            v * f
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_of_linear() {
        // x(t) = 1 + 2t: a − x² = a − 1 − 4t − 4t²
        let mut x = [1.0, 2.0, 0.0];
        let mut tmp = [0.0; 3];
        fiber_step(&mut x, 3.0, 0.0, &[0.0; 3], &mut tmp);
        assert_eq!(x, [2.0, -4.0, -4.0]);
        assert_eq!(derivatives(&x), vec![2.0, -4.0, -8.0]);
    }
}
