//! Arrival-rate lists.
//!
//! A rate is requests per second, written either as a plain number or as
//! `<count>/<duration>` with a unit suffix: `1/3h`, `1/15m`, `2/90s`. A list
//! is comma separated; `geom:<lo>:<hi>:<n>` and `lin:<lo>:<hi>:<n>` expand to
//! `n` rates with both ends included.

use anyhow::{bail, Context, Result};

fn duration_s(text: &str) -> Result<f64> {
    let t = text.trim();
    let split = t
        .find(|c: char| c.is_ascii_alphabetic())
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = if num.is_empty() {
        1.0
    } else {
        num.parse().with_context(|| format!("bad duration `{text}`"))?
    };
    let scale = match unit {
        "" | "s" | "sec" => 1.0,
        "m" | "min" => 60.0,
        "h" | "hr" => 3600.0,
        "d" => 86_400.0,
        other => bail!("unknown time unit `{other}` in `{text}` (use s, m, h or d)"),
    };
    Ok(value * scale)
}

/// One rate in requests per second.
pub fn parse_rate(text: &str) -> Result<f64> {
    let t = text.trim();
    let rate = match t.split_once('/') {
        Some((count, dur)) => {
            let count: f64 = count
                .trim()
                .parse()
                .with_context(|| format!("bad request count in `{t}`"))?;
            let d = duration_s(dur)?;
            if !(d > 0.0) {
                bail!("duration must be positive in `{t}`");
            }
            count / d
        }
        None => t.parse().with_context(|| format!("bad rate `{t}`"))?,
    };
    if !(rate >= 0.0) || !rate.is_finite() {
        bail!("rate must be finite and >= 0, got `{t}`");
    }
    Ok(rate)
}

fn parse_range(spec: &str, geometric: bool) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        bail!("expected <lo>:<hi>:<n> in `{spec}`");
    };
    let lo = parse_rate(lo)?;
    let hi = parse_rate(hi)?;
    let n: usize = n.trim().parse().with_context(|| format!("bad count in `{spec}`"))?;
    if n == 0 {
        bail!("range needs at least one point: `{spec}`");
    }
    if geometric && !(lo > 0.0 && hi > 0.0) {
        bail!("geometric range needs positive ends: `{spec}`");
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if i == n - 1 {
                hi
            } else if geometric {
                lo * (hi / lo).powf(t)
            } else {
                lo + (hi - lo) * t
            }
        })
        .collect())
}

/// A full rate list; see the module docs for the syntax.
pub fn parse_rates(text: &str) -> Result<Vec<f64>> {
    let t = text.trim();
    let rates = if let Some(rest) = t.strip_prefix("geom:") {
        parse_range(rest, true)?
    } else if let Some(rest) = t.strip_prefix("lin:") {
        parse_range(rest, false)?
    } else {
        t.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(parse_rate)
            .collect::<Result<Vec<_>>>()?
    };
    if rates.is_empty() {
        bail!("rate list `{text}` is empty");
    }
    Ok(rates)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units() {
        assert_eq!(parse_rate("1/3h").unwrap(), 1.0 / 10_800.0);
        assert_eq!(parse_rate("1/15m").unwrap(), 1.0 / 900.0);
        assert_eq!(parse_rate("2/90s").unwrap(), 2.0 / 90.0);
        assert_eq!(parse_rate("1/h").unwrap(), 1.0 / 3600.0);
        assert_eq!(parse_rate("0.25").unwrap(), 0.25);
        assert!(parse_rate("1/0m").is_err());
        assert!(parse_rate("1/3w").is_err());
        assert!(parse_rate("-1").is_err());
    }

    #[test]
    fn ranges() {
        let g = parse_rates("geom:1/3h:1/15m:5").unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 1.0 / 10_800.0);
        assert_eq!(g[4], 1.0 / 900.0);
        let ratio = g[1] / g[0];
        assert!(g.windows(2).all(|w| ((w[1] / w[0]) - ratio).abs() < 1e-12));
        assert_eq!(parse_rates("lin:0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_rates("1/1h, 1/30m").unwrap(), vec![1.0 / 3600.0, 1.0 / 1800.0]);
        assert!(parse_rates("geom:0:1:3").is_err());
        assert!(parse_rates("").is_err());
        assert!(parse_rates("lin:0:1").is_err());
    }
}
