//! Static upload/download split of a shared link.

use rayon::prelude::*;

use crate::cost::comm_latency;
use crate::error::{Error, Result};
use crate::model::LinkProfile;
use crate::trace::ProtocolTrace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitResult {
    pub upload_fraction: f64,
    pub seconds: f64,
}

/// Communication seconds of `trace` with `upload_fraction` of the link
/// allocated to upload.
pub fn evaluate_split(trace: &ProtocolTrace, total_bandwidth_bps: f64, upload_fraction: f64) -> Result<f64> {
    evaluate_split_on(trace, &LinkProfile::even(total_bandwidth_bps), upload_fraction)
}

/// As [`evaluate_split`], keeping the other settings of `link`.
pub fn evaluate_split_on(trace: &ProtocolTrace, link: &LinkProfile, upload_fraction: f64) -> Result<f64> {
    if !(upload_fraction > 0.0 && upload_fraction < 1.0) {
        return Err(Error::FractionOutOfRange(upload_fraction));
    }
    Ok(comm_latency(trace, &link.with_upload_fraction(upload_fraction)).total_s)
}

/// Grid points `g, 2g, ...` strictly inside (0, 1).
pub fn grid(granularity: f64) -> Result<Vec<f64>> {
    if !(granularity > 0.0) || !granularity.is_finite() {
        return Err(Error::Granularity(granularity));
    }
    let cells = (1.0 / granularity).round();
    let exact = ((cells * granularity) - 1.0).abs() < 1e-9;
    let points: Vec<f64> = if exact {
        (1..cells as u64).map(|i| i as f64 / cells).collect()
    } else {
        (1..).map(|i| i as f64 * granularity).take_while(|&f| f < 1.0).collect()
    };
    if points.is_empty() {
        return Err(Error::Granularity(granularity));
    }
    Ok(points)
}

/// Exhaustive grid search; ties go to the lowest fraction.
pub fn optimize_split(trace: &ProtocolTrace, total_bandwidth_bps: f64, granularity: f64) -> Result<SplitResult> {
    let link = LinkProfile {
        slot_granularity: granularity,
        ..LinkProfile::even(total_bandwidth_bps)
    };
    optimize_split_on(trace, &link)
}

/// Grid search at `link.slot_granularity`, keeping the link's other settings.
pub fn optimize_split_on(trace: &ProtocolTrace, link: &LinkProfile) -> Result<SplitResult> {
    let mut best: Option<SplitResult> = None;
    for f in grid(link.slot_granularity)? {
        let seconds = evaluate_split_on(trace, link, f)?;
        if best.is_none_or(|b| seconds < b.seconds) {
            best = Some(SplitResult {
                upload_fraction: f,
                seconds,
            });
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Same result as [`optimize_split_on`], with grid cells evaluated in
/// parallel. Ties are broken by grid index, so evaluation order is irrelevant.
pub fn optimize_split_par(trace: &ProtocolTrace, link: &LinkProfile) -> Result<SplitResult> {
    let points = grid(link.slot_granularity)?;
    let evaluated = points
        .par_iter()
        .enumerate()
        .map(|(i, &f)| evaluate_split_on(trace, link, f).map(|s| (s, i)))
        .collect::<Result<Vec<_>>>()?;
    let (seconds, i) = evaluated
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("grid is non-empty");
    Ok(SplitResult {
        upload_fraction: points[i],
        seconds,
    })
}

/// Optimum of `8U/(fB) + 8D/((1-f)B)` over the continuous fraction, with byte
/// totals `U` and `D`. A lower bound for any serialized schedule carrying the
/// same totals.
pub fn closed_form_bound(upload_bytes: f64, download_bytes: f64, total_bandwidth_bps: f64) -> Result<SplitResult> {
    if !(upload_bytes >= 0.0 && download_bytes >= 0.0) {
        return Err(Error::Parse("byte totals must be >= 0".to_string()));
    }
    if upload_bytes == 0.0 && download_bytes == 0.0 {
        return Err(Error::NoTraffic);
    }
    // Single-direction traffic: the optimum is the boundary limit.
    if upload_bytes == 0.0 || download_bytes == 0.0 {
        return Ok(SplitResult {
            upload_fraction: if upload_bytes == 0.0 { 0.0 } else { 1.0 },
            seconds: 8.0 * (upload_bytes + download_bytes) / total_bandwidth_bps,
        });
    }
    let su = upload_bytes.sqrt();
    let sd = download_bytes.sqrt();
    Ok(SplitResult {
        upload_fraction: su / (su + sd),
        seconds: 8.0 * (su + sd).powi(2) / total_bandwidth_bps,
    })
}

/// Sweep of `(fraction, seconds)` over the grid, for plotting.
pub fn sweep_split(trace: &ProtocolTrace, link: &LinkProfile) -> Result<Vec<SplitResult>> {
    grid(link.slot_granularity)?
        .into_iter()
        .map(|f| {
            Ok(SplitResult {
                upload_fraction: f,
                seconds: evaluate_split_on(trace, link, f)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_worked_example() {
        // 1 Gb up, 4 Gb down over 1 Gbps.
        let r = closed_form_bound(1.25e8, 5e8, 1e9).unwrap();
        assert!((r.upload_fraction - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.seconds - 9.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_degenerate() {
        assert!(matches!(closed_form_bound(0.0, 0.0, 1e9), Err(Error::NoTraffic)));
        let r = closed_form_bound(0.0, 1.25e8, 1e9).unwrap();
        assert_eq!(r.upload_fraction, 0.0);
        assert_eq!(r.seconds, 1.0);
        let e = closed_form_bound(5.0, 5.0, 1e9).unwrap();
        assert_eq!(e.upload_fraction, 0.5);
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid(0.25).unwrap(), vec![0.25, 0.5, 0.75]);
        assert_eq!(grid(0.001).unwrap().len(), 999);
        assert!(grid(1.0).is_err());
        assert!(grid(0.0).is_err());
    }
}
