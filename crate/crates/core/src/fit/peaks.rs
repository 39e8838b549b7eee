//! Peak picking used to seed the fits.

/// Median of a copy of `y` (NaN-free input).
pub fn median(y: &[f64]) -> f64 {
    if y.is_empty() {
        return f64::NAN;
    }
    let mut v = y.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Peaks of a fringe trace by hysteresis: a peak is the maximum of a run
/// that rises above `high` after having been below `low`, and ends when the
/// trace drops below `low` again. Runs cut by either end of the trace are
/// dropped, so every reported peak is fully sampled.
pub fn hysteresis_peaks(y: &[f64], high: f64, low: f64) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut armed = false;
    let mut run: Option<usize> = None;
    for (i, &v) in y.iter().enumerate() {
        match run {
            None => {
                if v < low {
                    armed = true;
                } else if armed && v > high {
                    run = Some(i);
                }
            }
            Some(best) => {
                if v < low {
                    peaks.push(best);
                    run = None;
                } else if v > y[best] {
                    run = Some(i);
                }
            }
        }
    }
    peaks
}

/// Fringe peaks with thresholds at 70% and 30% of the trace's range.
pub fn fringe_peaks(y: &[f64]) -> Vec<usize> {
    let (min, max) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = max - min;
    hysteresis_peaks(y, min + 0.7 * span, min + 0.3 * span)
}

/// Strict local maxima above `threshold`, highest first.
pub fn local_maxima_above(y: &[f64], threshold: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (1..y.len().saturating_sub(1))
        .filter(|&i| y[i] > threshold && y[i] > y[i - 1] && y[i] >= y[i + 1])
        .collect();
    idx.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    idx
}
