//! Continuous-time simple random walk on Z with rate 1/2 to each side:
//! `p_t(m) = e^{-t} I_|m|(t)`.

const RESCALE_AT: f64 = 1e200;

/// Index beyond which `p_t` carries less than about `1e-18` of mass.
pub fn support_radius(t: f64) -> usize {
    (9.0 * t.sqrt()).ceil() as usize + 30
}

/// `p_t(0), ..., p_t(m_max)` by Miller's backward recurrence, normalized by
/// `p(0) + 2 sum_{m >= 1} p(m) = 1`.
pub fn free_kernel_row(t: f64, m_max: usize) -> Vec<f64> {
    let mut row = vec![0.0; m_max + 1];
    if t <= 0.0 {
        row[0] = 1.0;
        return row;
    }
    let start = m_max.max(support_radius(t)) + 20;
    let mut vals = vec![0.0; start + 2];
    vals[start] = 1e-250;
    let two_over_t = 2.0 / t;
    for m in (1..=start).rev() {
        let next = vals[m + 1] + m as f64 * two_over_t * vals[m];
        vals[m - 1] = next;
        if next > RESCALE_AT {
            for v in &mut vals[m - 1..] {
                *v /= RESCALE_AT;
            }
        }
    }
    let total = vals[0] + 2.0 * vals[1..].iter().rev().sum::<f64>();
    for (m, r) in row.iter_mut().enumerate() {
        *r = vals[m] / total;
    }
    row
}

/// Single value `p_t(x)`.
pub fn free_walk_kernel(t: f64, x: i64) -> f64 {
    let m = x.unsigned_abs() as usize;
    if t <= 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    if t <= 0.5 {
        return small_time_series(t, m);
    }
    if t >= 1e4 && (m * m) as f64 <= t.sqrt() {
        return large_time_expansion(t, m);
    }
    free_kernel_row(t, m)[m]
}

fn small_time_series(t: f64, m: usize) -> f64 {
    let half = 0.5 * t;
    let mut term = (-t).exp();
    for j in 1..=m {
        term *= half / j as f64;
    }
    let mut sum = term;
    let sq = half * half;
    for k in 1..200 {
        term *= sq / (k as f64 * (k + m) as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

// e^{-t} I_m(t) ~ (2 pi t)^{-1/2} sum_k (-1)^k a_k(m) / t^k.
fn large_time_expansion(t: f64, m: usize) -> f64 {
    let mu = 4.0 * (m * m) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..40 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (k as f64 * 8.0 * t);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * t).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branches_agree_with_recurrence() {
        for &t in &[0.1, 0.5] {
            let row = free_kernel_row(t, 10);
            for m in 0..=10 {
                assert!((small_time_series(t, m) - row[m]).abs() <= 1e-16 + 1e-13 * row[m]);
            }
        }
        for &t in &[1e4, 3e5] {
            let row = free_kernel_row(t, 5);
            for m in 0..=3 {
                assert!((large_time_expansion(t, m) - row[m]).abs() <= 1e-13 * row[m]);
            }
        }
    }

    #[test]
    fn zero_time_is_delta() {
        assert_eq!(free_walk_kernel(0.0, 0), 1.0);
        assert_eq!(free_walk_kernel(0.0, 3), 0.0);
    }
}
