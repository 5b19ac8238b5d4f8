/// Number of separated peaks in a smoothed histogram of `values` over their
/// central 99% range.
///
/// A peak counts when it reaches 10% of the tallest bin; two neighbouring
/// peaks are merged unless the valley between them drops below 60% of the
/// lower one.
pub fn histogram_mode_count(values: &[f64], bins: usize) -> usize {
    if values.len() < 2 || bins < 3 {
        return values.len().min(1);
    }
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
    let (lo, hi) = (q(0.005), q(0.995));
    if !(hi > lo) {
        return 1;
    }
    let mut hist = vec![0.0; bins];
    for &v in &sorted {
        if (lo..=hi).contains(&v) {
            let b = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
            hist[b.min(bins - 1)] += 1.0;
        }
    }
    // two passes of a 3-bin moving average
    for _ in 0..2 {
        hist = (0..bins)
            .map(|i| {
                let a = if i > 0 { hist[i - 1] } else { hist[i] };
                let c = if i + 1 < bins { hist[i + 1] } else { hist[i] };
                (a + hist[i] + c) / 3.0
            })
            .collect();
    }
    let top = hist.iter().cloned().fold(0.0, f64::max);
    let mut peaks: Vec<usize> = (0..bins)
        .filter(|&i| {
            let left = if i > 0 { hist[i - 1] } else { f64::NEG_INFINITY };
            let right = if i + 1 < bins { hist[i + 1] } else { f64::NEG_INFINITY };
            hist[i] > left && hist[i] >= right && hist[i] >= 0.1 * top
        })
        .collect();
    let mut i = 0;
    while i + 1 < peaks.len() {
        let (a, b) = (peaks[i], peaks[i + 1]);
        let valley = hist[a..=b].iter().cloned().fold(f64::INFINITY, f64::min);
        if valley >= 0.6 * hist[a].min(hist[b]) {
            // keep the taller of the two
            if hist[a] >= hist[b] {
                peaks.remove(i + 1);
            } else {
                peaks.remove(i);
            }
        } else {
            i += 1;
        }
    }
    peaks.len()
}
