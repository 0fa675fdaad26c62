//! Synthetic trajectory sources and data plumbing shared by every model.

pub mod csv_io;
pub mod flight;
pub mod maze;
pub mod norm;
pub mod pursuit;

use crate::trajectory::distance;

/// Resamples a polyline to `n` points equally spaced in arc length. The first
/// and last points are reproduced exactly.
pub fn resample_arc_length(points: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    assert!(!points.is_empty() && n > 0);
    let mut cumulative = Vec::with_capacity(points.len());
    let mut total = 0.0;
    cumulative.push(0.0);
    for w in points.windows(2) {
        total += distance(&w[0], &w[1]);
        cumulative.push(total);
    }
    if total == 0.0 || n == 1 {
        return vec![points[0].clone(); n];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        if k == n - 1 {
            out.push(points[points.len() - 1].clone());
            break;
        }
        let s = total * k as f64 / (n - 1) as f64;
        while seg + 1 < points.len() - 1 && cumulative[seg + 1] < s {
            seg += 1;
        }
        let len = cumulative[seg + 1] - cumulative[seg];
        let frac = if len > 0.0 { ((s - cumulative[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(lerp(&points[seg], &points[seg + 1], frac));
    }
    out
}

/// Linear interpolation of `(time, state)` samples at `n` evenly spaced times
/// between the first and last sample.
pub fn resample_by_time(times: &[f64], points: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    assert!(!points.is_empty() && times.len() == points.len() && n > 0);
    if points.len() == 1 || n == 1 {
        return vec![points[0].clone(); n];
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let mut seg = 0;
    (0..n)
        .map(|k| {
            if k == n - 1 {
                return points[points.len() - 1].clone();
            }
            let t = t0 + (t1 - t0) * k as f64 / (n - 1) as f64;
            while seg + 1 < times.len() - 1 && times[seg + 1] <= t {
                seg += 1;
            }
            let frac = ((t - times[seg]) / (times[seg + 1] - times[seg])).clamp(0.0, 1.0);
            lerp(&points[seg], &points[seg + 1], frac)
        })
        .collect()
}

fn lerp(a: &[f64], b: &[f64], frac: f64) -> Vec<f64> {
    if frac == 0.0 {
        return a.to_vec();
    }
    a.iter().zip(b).map(|(x, y)| x + (y - x) * frac).collect()
}

/// Largest-remainder apportionment of `n` items by `fractions`; ties go to
/// the later bucket.
pub fn split_counts(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // Remainders are compared after rounding away representation noise
    // (0.1 · 474 is not exactly 47.4).
    let rem = |i: usize| ((quotas[i] - quotas[i].floor()) * 1e9).round() as i64;
    order.sort_by(|&a, &b| rem(b).cmp(&rem(a)).then(b.cmp(&a)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arc_length_resample_of_straight_line() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![4.0, 0.0]];
        let out = resample_arc_length(&pts, 5);
        let xs: Vec<f64> = out.iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn arc_length_resample_degenerate() {
        let pts = vec![vec![2.0, 3.0], vec![2.0, 3.0]];
        assert_eq!(resample_arc_length(&pts, 4), vec![vec![2.0, 3.0]; 4]);
    }

    #[test]
    fn time_resample_is_exact_on_grid() {
        let times = [0.0, 1.0, 2.0, 3.0];
        let pts: Vec<Vec<f64>> = times.iter().map(|t| vec![t * 0.1, -t]).collect();
        assert_eq!(resample_by_time(&times, &pts, 4), pts);
    }

    #[test]
    fn paper_split_sizes() {
        assert_eq!(split_counts(474, &[0.8, 0.1, 0.1]), vec![379, 47, 48]);
        assert_eq!(split_counts(10, &[0.8, 0.1, 0.1]), vec![8, 1, 1]);
        assert_eq!(split_counts(0, &[0.8, 0.1, 0.1]), vec![0, 0, 0]);
        for n in 0..200 {
            assert_eq!(split_counts(n, &[0.8, 0.1, 0.1]).iter().sum::<usize>(), n);
        }
    }
}
