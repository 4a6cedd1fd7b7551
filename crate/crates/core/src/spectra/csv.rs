use std::fmt::Write as _;
use std::path::Path;

use super::{SpectrumTrace, TraceMeta, Unit};
use crate::error::{Error, Result};

const HEADER: &str = "freq_hz,value";

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

/// Serializes a trace: `#`-prefixed `key=value` metadata, the header
/// `freq_hz,value`, then one row per point at 17 significant digits.
pub fn write_trace(trace: &SpectrumTrace) -> String {
    let m = &trace.meta;
    let mut out = String::with_capacity(48 * (trace.len() + 8));
    let _ = writeln!(out, "# unit={}", trace.unit());
    if let Some(n) = m.n_avg {
        let _ = writeln!(out, "# n_avg={n}");
    }
    if let Some(d) = &m.device {
        let _ = writeln!(out, "# device={}", one_line(d));
    }
    if let Some(d) = &m.drive {
        let _ = writeln!(out, "# drive={}", one_line(d));
    }
    if let Some(s) = m.seed {
        let _ = writeln!(out, "# seed={s}");
    }
    for w in &m.warnings {
        let _ = writeln!(out, "# warning={}", one_line(w));
    }
    for (k, v) in &m.extra {
        let _ = writeln!(out, "# {}={}", one_line(k), one_line(v));
    }
    out.push_str(HEADER);
    out.push('\n');
    for (f, v) in trace.freq_hz().iter().zip(trace.values()) {
        let _ = writeln!(out, "{f:.16e},{v:.16e}");
    }
    out
}

/// Parses the format written by [`write_trace`]. Comment lines without `=`
/// are ignored; unrecognized keys land in `meta.extra`.
pub fn read_trace(text: &str) -> Result<SpectrumTrace> {
    let mut meta = TraceMeta::default();
    let mut unit = None;
    let mut header_seen = false;
    let mut freq = Vec::new();
    let mut vals = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            let Some((k, v)) = c.split_once('=') else {
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            match k {
                "unit" => unit = Some(v.parse::<Unit>().map_err(|e| err(e.to_string()))?),
                "n_avg" => {
                    meta.n_avg = Some(v.parse().map_err(|_| err(format!("bad n_avg `{v}`")))?)
                }
                "seed" => meta.seed = Some(v.parse().map_err(|_| err(format!("bad seed `{v}`")))?),
                "device" => meta.device = Some(v.to_string()),
                "drive" => meta.drive = Some(v.to_string()),
                "warning" => meta.warnings.push(v.to_string()),
                _ => {
                    meta.extra.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        if !header_seen {
            if line.replace(' ', "") != HEADER {
                return Err(err(format!("expected header `{HEADER}`, found `{line}`")));
            }
            header_seen = true;
            continue;
        }
        let (a, b) = line.split_once(',').ok_or_else(|| {
            err(format!(
                "expected two comma-separated columns, found `{line}`"
            ))
        })?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| err(format!("not a number: `{}`", s.trim())))
        };
        freq.push(parse(a)?);
        vals.push(parse(b)?);
    }
    if !header_seen {
        return Err(Error::Parse {
            line: 0,
            message: format!("missing header `{HEADER}`"),
        });
    }
    let unit = unit.ok_or_else(|| Error::Parse {
        line: 0,
        message: "missing `# unit=` line".into(),
    })?;
    SpectrumTrace::new(freq, vals, unit, meta)
}

pub fn write_trace_file(trace: &SpectrumTrace, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_trace(trace))?;
    Ok(())
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<SpectrumTrace> {
    read_trace(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SpectrumTrace {
        let f: Vec<f64> = (0..10)
            .map(|i| 10.56e6 + 0.1 * i as f64 + 1.0 / 3.0)
            .collect();
        let v: Vec<f64> = (0..10)
            .map(|i| (i as f64).sqrt() * std::f64::consts::PI * 1e-3 + 2.6)
            .collect();
        let mut meta = TraceMeta {
            device: Some("reference".into()),
            drive: Some("n_d=4000".into()),
            n_avg: Some(500),
            seed: Some(7),
            warnings: vec!["first".into(), "second\nline".into()],
            ..TraceMeta::default()
        };
        meta.extra.insert("temperature_k".into(), "0.02".into());
        SpectrumTrace::new(f, v, Unit::Quanta, meta).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let t = sample();
        let text = write_trace(&t);
        assert!(text.starts_with("# unit=quanta\n# n_avg=500\n# device=reference\n"));
        let back = read_trace(&text).unwrap();
        assert_eq!(back.freq_hz(), t.freq_hz());
        assert_eq!(back.values(), t.values());
        assert_eq!(
            back.meta.warnings,
            vec!["first".to_string(), "second line".to_string()]
        );
        assert_eq!(back.meta.extra["temperature_k"], "0.02");
        assert_eq!(write_trace(&back), text);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_trace_file(&sample(), &p).unwrap();
        assert_eq!(read_trace_file(&p).unwrap().values(), sample().values());
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(
            read_trace("freq_hz,value\n1,2\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            read_trace("# unit=quanta\nf,v\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_trace("# unit=furlongs\nfreq_hz,value\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        let mut text = write_trace(&sample());
        text.push_str("1e7,abc\n");
        assert!(matches!(
            read_trace(&text),
            Err(Error::Parse { line: 20, .. })
        ));
        let short = "# unit=quanta\nfreq_hz,value\n1,1\n2,1\n";
        assert!(matches!(read_trace(short), Err(Error::InvalidTrace(_))));
    }
}
