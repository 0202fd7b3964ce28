//! Frequency traces: parsing, segmentation into quiet/excursion intervals,
//! empirical fits and independence diagnostics.
//!
//! Trace files are plain text. Line 1 is a header of comma-separated
//! `key=value` pairs with `sample_rate_hz` and `nominal_hz`; every following
//! line holds one frequency reading in Hz.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::battery::ExcursionSign;
use crate::distribution::ScalarDistribution;
use crate::error::{invalid, Error, Result};
use crate::model::ExcursionSignModel;

/// Readings further than this from nominal are rejected as corrupt.
pub const SANITY_BAND_HZ: f64 = 5.0;
pub const DEFAULT_DEAD_BAND_HZ: f64 = 0.010;
pub const DEFAULT_MIN_EVENT_SAMPLES: usize = 5;
pub const MIN_FIT_EVENTS: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyTrace {
    sample_rate_hz: f64,
    nominal_hz: f64,
    samples: Vec<f64>,
}

impl FrequencyTrace {
    pub fn new(sample_rate_hz: f64, nominal_hz: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(invalid(format!("sample rate must be > 0, got {sample_rate_hz}")));
        }
        if !(nominal_hz.is_finite() && nominal_hz > 0.0) {
            return Err(invalid(format!("nominal frequency must be > 0, got {nominal_hz}")));
        }
        if samples.is_empty() {
            return Err(invalid("trace has no samples"));
        }
        if let Some(k) = samples
            .iter()
            .position(|f| !((f - nominal_hz).abs() <= SANITY_BAND_HZ))
        {
            return Err(invalid(format!(
                "sample {k} ({}) lies outside nominal ± {SANITY_BAND_HZ} Hz",
                samples[k]
            )));
        }
        Ok(Self {
            sample_rate_hz,
            nominal_hz,
            samples,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn nominal_hz(&self) -> f64 {
        self.nominal_hz
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn duration_h(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz / 3600.0
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sample_rate_hz={},nominal_hz={}", self.sample_rate_hz, self.nominal_hz)?;
        for f in &self.samples {
            writeln!(w, "{f}")?;
        }
        Ok(())
    }
}

fn parse_header(line: &str) -> std::result::Result<(f64, f64), String> {
    let mut rate = None;
    let mut nominal = None;
    for field in line.split(',') {
        let field = field.trim();
        if field.is_empty() {
            continue;
        }
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| format!("header field `{field}` is not key=value"))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("header value `{}` is not a number", value.trim()))?;
        match key.trim() {
            "sample_rate_hz" => rate = Some(v),
            "nominal_hz" => nominal = Some(v),
            other => return Err(format!("unknown header key `{other}`")),
        }
    }
    match (rate, nominal) {
        (Some(r), Some(n)) => Ok((r, n)),
        _ => Err("header must declare sample_rate_hz and nominal_hz".into()),
    }
}

/// Parses a trace from any reader. Errors carry 1-based line numbers.
pub fn parse_trace<R: Read>(reader: R) -> Result<FrequencyTrace> {
    let mut lines = BufReader::with_capacity(1 << 16, reader).lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let (rate, nominal) = parse_header(header.trim_start_matches('\u{feff}'))
        .map_err(|message| Error::Parse { line: 1, message })?;
    let mut samples = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let lineno = k + 2;
        let text = line.trim();
        let v: f64 = text.parse().map_err(|_| Error::Parse {
            line: lineno,
            message: if text.is_empty() {
                "missing value".into()
            } else {
                format!("`{text}` is not a number")
            },
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("non-finite reading `{text}`"),
            });
        }
        if (v - nominal).abs() > SANITY_BAND_HZ {
            return Err(Error::Parse {
                line: lineno,
                message: format!("reading {v} Hz is outside nominal ± {SANITY_BAND_HZ} Hz"),
            });
        }
        samples.push(v);
    }
    if samples.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "trace has no samples".into(),
        });
    }
    FrequencyTrace::new(rate, nominal, samples)
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<FrequencyTrace> {
    parse_trace(File::open(path)?)
}

/// One stage of the process: a quiet interval followed by an excursion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub i_len_h: f64,
    pub j_len_h: f64,
    pub q: ExcursionSign,
    /// Requested power during the excursion, kW; unknown for measured traces.
    pub p_pfc_kw: Option<f64>,
}

impl Event {
    pub fn energy_kwh(&self) -> Option<f64> {
        self.p_pfc_kw.map(|p| p * self.j_len_h)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    pub events: Vec<Event>,
    /// Quiet time after the last complete excursion.
    pub trailing_i_h: f64,
    /// Time discarded before the first quiet interval and after the last
    /// complete interval (partial excursions at the edges).
    pub dropped_h: f64,
    /// Trace sample range covered by `events` and `trailing_i_h`.
    pub start_index: Option<usize>,
    pub end_index: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct EventRow {
    i_len_h: f64,
    j_len_h: f64,
    q: i8,
    p_pfc_kw: Option<f64>,
}

impl EventSequence {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Number of quiet intervals, counting a trailing one.
    pub fn i_interval_count(&self) -> usize {
        self.events.len() + usize::from(self.trailing_i_h > 0.0)
    }

    pub fn total_duration_h(&self) -> f64 {
        self.events.iter().map(|e| e.i_len_h + e.j_len_h).sum::<f64>() + self.trailing_i_h
    }

    /// CSV with columns `i_len_h, j_len_h, q, p_pfc_kw`. The trailing quiet
    /// interval is not part of the table.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for e in &self.events {
            out.serialize(EventRow {
                i_len_h: e.i_len_h,
                j_len_h: e.j_len_h,
                q: e.q.as_i8(),
                p_pfc_kw: e.p_pfc_kw,
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut events = Vec::new();
        for (k, row) in rdr.deserialize::<EventRow>().enumerate() {
            let row = row?;
            let line = k + 2;
            let q = ExcursionSign::from_i8(row.q).ok_or_else(|| Error::Parse {
                line,
                message: format!("q must be 1 or -1, got {}", row.q),
            })?;
            if !(row.i_len_h > 0.0 && row.j_len_h > 0.0) {
                return Err(Error::Parse {
                    line,
                    message: "interval lengths must be > 0".into(),
                });
            }
            events.push(Event {
                i_len_h: row.i_len_h,
                j_len_h: row.j_len_h,
                q,
                p_pfc_kw: row.p_pfc_kw,
            });
        }
        Ok(Self {
            events,
            ..Default::default()
        })
    }
}

/// Splits a trace into alternating quiet (I) and excursion (J) intervals.
///
/// Samples within `nominal ± half_width` are quiet. An excursion is a maximal
/// run of out-of-band samples; runs shorter than `min_event_samples` are
/// treated as quiet. The excursion sign is that of the summed deviation, so a
/// run that crosses the band from one side to the other counts once. Partial
/// excursions at either edge of the trace are dropped; a trailing quiet
/// interval is kept separately.
pub fn extract_intervals(
    t: &FrequencyTrace,
    half_width_hz: f64,
    min_event_samples: usize,
) -> Result<EventSequence> {
    if !(half_width_hz > 0.0) {
        return Err(invalid(format!("dead band half-width must be > 0, got {half_width_hz}")));
    }
    let nominal = t.nominal_hz;
    let samples = &t.samples;
    let n = samples.len();
    let dt_h = 1.0 / t.sample_rate_hz / 3600.0;

    // excursion runs [start, end) that survive the debounce, with signed deviation sums
    let mut runs: Vec<(usize, usize, f64)> = Vec::new();
    let mut k = 0;
    while k < n {
        if (samples[k] - nominal).abs() <= half_width_hz {
            k += 1;
            continue;
        }
        let start = k;
        let mut dev = 0.0;
        while k < n && (samples[k] - nominal).abs() > half_width_hz {
            dev += samples[k] - nominal;
            k += 1;
        }
        if k - start >= min_event_samples.max(1) {
            runs.push((start, k, dev));
        }
    }

    let mut seq = EventSequence::default();
    let mut cursor = 0;
    if let Some(&(s, e, _)) = runs.first() {
        if s == 0 {
            // excursion already in progress when the trace starts
            seq.dropped_h += (e - s) as f64 * dt_h;
            cursor = e;
            runs.remove(0);
        }
    }
    seq.start_index = Some(cursor);
    for &(s, e, dev) in &runs {
        if e == n {
            // excursion still in progress when the trace ends
            seq.trailing_i_h = (s - cursor) as f64 * dt_h;
            seq.dropped_h += (e - s) as f64 * dt_h;
            seq.end_index = Some(s);
            return Ok(seq);
        }
        seq.events.push(Event {
            i_len_h: (s - cursor) as f64 * dt_h,
            j_len_h: (e - s) as f64 * dt_h,
            q: if dev >= 0.0 {
                ExcursionSign::Over
            } else {
                ExcursionSign::Under
            },
            p_pfc_kw: None,
        });
        cursor = e;
    }
    seq.trailing_i_h = (n - cursor) as f64 * dt_h;
    seq.end_index = Some(n);
    Ok(seq)
}

/// Empirical laws of I and J (hours) and the excursion-sign split.
pub fn fit_empirical(
    ev: &EventSequence,
) -> Result<(ScalarDistribution, ScalarDistribution, ExcursionSignModel)> {
    if ev.len() < MIN_FIT_EVENTS {
        return Err(Error::InsufficientEvents {
            needed: MIN_FIT_EVENTS,
            got: ev.len(),
        });
    }
    let i = ScalarDistribution::empirical(ev.events.iter().map(|e| e.i_len_h).collect())?;
    let j = ScalarDistribution::empirical(ev.events.iter().map(|e| e.j_len_h).collect())?;
    let over = ev.events.iter().filter(|e| e.q == ExcursionSign::Over).count();
    let signs = ExcursionSignModel::new(over as f64 / ev.len() as f64)?;
    Ok((i.with_units("h"), j.with_units("h"), signs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrelation {
    pub pair: String,
    /// Values at lags `-max_lag..=max_lag`; lag `k` pairs `x_t` with `y_{t+k}`.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub max_lag: usize,
    /// White-noise band `3/√n`.
    pub band: f64,
    /// Auto-correlations at lags `0..=max_lag` for I, J and q.
    pub auto_i: Vec<f64>,
    pub auto_j: Vec<f64>,
    pub auto_q: Vec<f64>,
    pub cross: Vec<CrossCorrelation>,
    /// Fewer events than the 100 needed for a meaningful band.
    pub low_sample: bool,
}

/// Biased sample correlation of `x_t` with `y_{t+lag}`.
fn correlation(x: &[f64], y: &[f64], lag: isize) -> f64 {
    let n = x.len();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let var = |v: &[f64], m: f64| v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n as f64;
    // rounding noise around a constant series is not variance
    let flat = |v: f64, m: f64| v <= (1e-12 * m.abs().max(f64::MIN_POSITIVE)).powi(2);
    let (vx, vy) = (var(x, mx), var(y, my));
    if flat(vx, mx) || flat(vy, my) || lag.unsigned_abs() >= n {
        return 0.0;
    }
    let denom = (vx * vy).sqrt();
    if !(denom > 0.0) {
        return 0.0;
    }
    let mut acc = 0.0;
    for t in 0..n {
        let u = t as isize + lag;
        if u < 0 || u >= n as isize {
            continue;
        }
        acc += (x[t] - mx) * (y[u as usize] - my);
    }
    acc / n as f64 / denom
}

impl CorrelationReport {
    /// Largest absolute correlation at any non-zero lag, over every series.
    pub fn max_abs_nonzero_lag(&self) -> f64 {
        let auto = [&self.auto_i, &self.auto_j, &self.auto_q]
            .into_iter()
            .flat_map(|v| v.iter().skip(1));
        let l = self.max_lag;
        let cross = self
            .cross
            .iter()
            .flat_map(|c| c.values.iter().enumerate().filter(move |(k, _)| *k != l).map(|(_, v)| v));
        auto.chain(cross).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Long-format CSV: `series, lag, value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["series", "lag", "value"])?;
        for (name, v) in [("I", &self.auto_i), ("J", &self.auto_j), ("q", &self.auto_q)] {
            for (lag, x) in v.iter().enumerate() {
                out.write_record([name.to_string(), lag.to_string(), x.to_string()])?;
            }
        }
        let l = self.max_lag as isize;
        for c in &self.cross {
            for (k, x) in c.values.iter().enumerate() {
                out.write_record([c.pair.clone(), (k as isize - l).to_string(), x.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub fn correlation_report(ev: &EventSequence, max_lag: usize) -> CorrelationReport {
    let i: Vec<f64> = ev.events.iter().map(|e| e.i_len_h).collect();
    let j: Vec<f64> = ev.events.iter().map(|e| e.j_len_h).collect();
    let q: Vec<f64> = ev.events.iter().map(|e| e.q.as_i8() as f64).collect();
    let n = i.len();
    let auto = |x: &[f64]| -> Vec<f64> {
        (0..=max_lag)
            .map(|k| if k == 0 { 1.0 } else { correlation(x, x, k as isize) })
            .collect()
    };
    let l = max_lag as isize;
    let cross = |name: &str, x: &[f64], y: &[f64]| CrossCorrelation {
        pair: name.into(),
        values: (-l..=l).map(|k| correlation(x, y, k)).collect(),
    };
    CorrelationReport {
        n,
        max_lag,
        band: if n > 0 { 3.0 / (n as f64).sqrt() } else { f64::INFINITY },
        auto_i: auto(&i),
        auto_j: auto(&j),
        auto_q: auto(&q),
        cross: vec![cross("I-J", &i, &j), cross("I-q", &i, &q), cross("J-q", &j, &q)],
        low_sample: n < 100,
    }
}

/// Renders events as a trace: quiet samples at nominal, excursion samples at
/// `nominal ± excursion_hz`. Lengths are rounded to whole samples.
pub fn synthesize_trace(
    ev: &EventSequence,
    sample_rate_hz: f64,
    nominal_hz: f64,
    excursion_hz: f64,
) -> Result<FrequencyTrace> {
    let per_h = sample_rate_hz * 3600.0;
    let count = |h: f64| (h * per_h).round() as usize;
    let mut samples = Vec::with_capacity(count(ev.total_duration_h()) + 1);
    for e in &ev.events {
        samples.extend(std::iter::repeat_n(nominal_hz, count(e.i_len_h)));
        let f = nominal_hz + e.q.as_i8() as f64 * excursion_hz;
        samples.extend(std::iter::repeat_n(f, count(e.j_len_h)));
    }
    samples.extend(std::iter::repeat_n(nominal_hz, count(ev.trailing_i_h)));
    if samples.is_empty() {
        samples.push(nominal_hz);
    }
    FrequencyTrace::new(sample_rate_hz, nominal_hz, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(level: f64) -> FrequencyTrace {
        let mut s = vec![60.0; 100];
        s.extend(std::iter::repeat_n(level, 50));
        s.extend(std::iter::repeat_n(60.0, 100));
        FrequencyTrace::new(10.0, 60.0, s).unwrap()
    }

    #[test]
    fn square_wave_segments() {
        let ev = extract_intervals(&square(60.05), 0.010, 1).unwrap();
        assert_eq!(ev.len(), 1);
        let e = ev.events[0];
        assert!((e.i_len_h * 3600.0 - 10.0).abs() < 1e-9);
        assert!((e.j_len_h * 3600.0 - 5.0).abs() < 1e-9);
        assert_eq!(e.q, ExcursionSign::Over);
        assert!((ev.trailing_i_h * 3600.0 - 10.0).abs() < 1e-9);
        let ev = extract_intervals(&square(59.95), 0.010, 1).unwrap();
        assert_eq!(ev.events[0].q, ExcursionSign::Under);
    }

    #[test]
    fn constant_trace_is_one_quiet_interval() {
        let t = FrequencyTrace::new(10.0, 60.0, vec![60.0; 3]).unwrap();
        let ev = extract_intervals(&t, 0.010, 1).unwrap();
        assert!(ev.is_empty());
        assert_eq!(ev.i_interval_count(), 1);
    }

    #[test]
    fn debounce_merges_short_runs() {
        let mut s = vec![60.0; 20];
        s.extend([60.02, 60.02]);
        s.extend(vec![60.0; 20]);
        s.extend(vec![59.9; 10]);
        s.extend(vec![60.0; 5]);
        let t = FrequencyTrace::new(10.0, 60.0, s).unwrap();
        assert_eq!(extract_intervals(&t, 0.01, 1).unwrap().len(), 2);
        let ev = extract_intervals(&t, 0.01, 3).unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev.events[0].i_len_h * 36000.0 - 42.0).abs() < 1e-9);
    }

    #[test]
    fn edge_excursions_are_dropped() {
        let mut s = vec![60.1; 4];
        s.extend(vec![60.0; 6]);
        s.extend(vec![59.9; 3]);
        s.extend(vec![60.0; 7]);
        s.extend(vec![60.1; 2]);
        let t = FrequencyTrace::new(1.0, 60.0, s).unwrap();
        let ev = extract_intervals(&t, 0.01, 1).unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev.dropped_h * 3600.0 - 6.0).abs() < 1e-9);
        assert!((ev.trailing_i_h * 3600.0 - 7.0).abs() < 1e-9);
        assert!(((ev.total_duration_h() + ev.dropped_h) - t.duration_h()).abs() < 1e-12);
        assert_eq!((ev.start_index, ev.end_index), (Some(4), Some(20)));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = "sample_rate_hz=10,nominal_hz=60\n60\n60\n60\n60\n60\nabc\n60\n";
        match parse_trace(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_trace("".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_trace("rate=10\n60\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_trace("sample_rate_hz=10,nominal_hz=60\n60\nNaN\n".as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        let t = parse_trace("sample_rate_hz=10,nominal_hz=60\n60.000\n60.000\n60.000\n".as_bytes()).unwrap();
        assert_eq!(t.samples().len(), 3);
    }

    #[test]
    fn fit_counts() {
        let mk = |i: f64, q| Event {
            i_len_h: i,
            j_len_h: 0.01,
            q,
            p_pfc_kw: None,
        };
        let mut events: Vec<Event> = (0..30).map(|k| mk((k % 3 + 1) as f64, ExcursionSign::Over)).collect();
        let ev = EventSequence {
            events: events.clone(),
            ..Default::default()
        };
        let (i, _, signs) = fit_empirical(&ev).unwrap();
        assert_eq!(signs.p1(), 1.0);
        assert!((i.ccdf(2.0) - 1.0 / 3.0).abs() < 1e-12);
        events.truncate(29);
        let short = EventSequence {
            events,
            ..Default::default()
        };
        assert!(matches!(
            fit_empirical(&short),
            Err(Error::InsufficientEvents { needed: 30, got: 29 })
        ));
    }

    #[test]
    fn alternating_signs_anticorrelate() {
        let events = (0..200)
            .map(|k| Event {
                i_len_h: 0.05 + 0.001 * (k % 7) as f64,
                j_len_h: 0.01,
                q: if k % 2 == 0 {
                    ExcursionSign::Over
                } else {
                    ExcursionSign::Under
                },
                p_pfc_kw: None,
            })
            .collect();
        let r = correlation_report(
            &EventSequence {
                events,
                ..Default::default()
            },
            5,
        );
        assert_eq!(r.auto_q[0], 1.0);
        assert!((r.auto_q[1] + 1.0).abs() < 0.02);
        // constant J has no variance
        assert_eq!(r.auto_j[1], 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let ev = extract_intervals(&square(60.05), 0.010, 1).unwrap();
        let mut buf = Vec::new();
        ev.write_csv(&mut buf).unwrap();
        let back = EventSequence::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.events, ev.events);
    }
}
