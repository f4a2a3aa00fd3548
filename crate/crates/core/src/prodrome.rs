//! Onset timelines over sliding windows and prodromal-period location.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{format_timestamp, parse_timestamp, UserRecord};
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::forest::ForestModel;
use crate::textfeat::TfidfState;
use crate::windows::slide_windows;

pub const DEFAULT_LOWER: f64 = 0.3;
pub const DEFAULT_UPPER: f64 = 0.7;

#[derive(Clone, Debug, PartialEq)]
pub struct TimelinePoint {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub n_tweets: usize,
    /// `None` for windows without tweets.
    pub probability: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnsetTimeline {
    pub user_id: String,
    pub points: Vec<TimelinePoint>,
}

impl OnsetTimeline {
    pub fn probabilities(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.probability).collect()
    }
}

/// Scores every sliding window of `user` with `model`.
pub fn onset_timeline(
    user: &UserRecord,
    model: &ForestModel,
    extractor: &FeatureExtractor,
    tfidf: Option<&TfidfState>,
    alpha: Duration,
    step: Duration,
) -> Result<OnsetTimeline> {
    let windows = slide_windows(user, alpha, step)?;
    let points = windows
        .par_iter()
        .map(|w| {
            let probability = if w.is_empty() {
                None
            } else {
                let x = extractor.extract_columns(&model.schema, w, tfidf)?;
                Some(model.predict_proba(&x)?)
            };
            Ok(TimelinePoint {
                start: w.start(),
                end: w.end,
                n_tweets: w.len(),
                probability,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OnsetTimeline {
        user_id: user.user_id().to_string(),
        points,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProdromeBounds {
    pub lower: f64,
    pub upper: f64,
    /// Drop the open candidate when a window falls below `lower`.
    pub clear_below_lower: bool,
}

impl Default for ProdromeBounds {
    fn default() -> Self {
        ProdromeBounds {
            lower: DEFAULT_LOWER,
            upper: DEFAULT_UPPER,
            clear_below_lower: false,
        }
    }
}

impl ProdromeBounds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.lower && self.lower < self.upper && self.upper <= 1.0) {
            return Err(Error::arg(format!(
                "prodrome bounds must satisfy 0 <= lower < upper <= 1, got {} and {}",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

/// Timeline indices (0-based) of one prodromal period and the window that
/// closed it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProdromeInterval {
    pub members: Vec<usize>,
    pub trigger: usize,
}

impl ProdromeInterval {
    /// From the start of the first member window to the end of the last.
    pub fn span(&self, t: &OnsetTimeline) -> (DateTime<Utc>, DateTime<Utc>) {
        (
            t.points[self.members[0]].start,
            t.points[*self.members.last().unwrap()].end,
        )
    }
}

/// Windows with probability in `[lower, upper]` join the candidate; a window
/// above `upper` emits a non-empty candidate; windows below `lower` and
/// undefined windows are skipped. An unclosed trailing candidate is dropped.
pub fn locate_prodrome(probs: &[Option<f64>], bounds: &ProdromeBounds) -> Result<Vec<ProdromeInterval>> {
    bounds.validate()?;
    let mut out = Vec::new();
    let mut candidate = Vec::new();
    for (i, p) in probs.iter().enumerate() {
        let Some(l) = *p else { continue };
        if l > bounds.upper {
            if !candidate.is_empty() {
                out.push(ProdromeInterval {
                    members: std::mem::take(&mut candidate),
                    trigger: i,
                });
            }
        } else if l >= bounds.lower {
            candidate.push(i);
        } else if bounds.clear_below_lower {
            candidate.clear();
        }
    }
    Ok(out)
}

pub fn write_timeline_csv(t: &OnsetTimeline, w: impl std::io::Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["user_id", "window_id", "window_start", "window_end", "n_tweets", "probability"])?;
    for (i, p) in t.points.iter().enumerate() {
        out.write_record([
            t.user_id.clone(),
            (i + 1).to_string(),
            format_timestamp(&p.start),
            format_timestamp(&p.end),
            p.n_tweets.to_string(),
            p.probability.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_timeline_csv(path: impl AsRef<Path>) -> Result<OnsetTimeline> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, 0, format!("{other:?}")),
    })?;
    let mut user_id = None;
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() < 6 {
            return Err(Error::parse(path, line, "expected 6 columns"));
        }
        user_id.get_or_insert_with(|| rec[0].to_string());
        let probability = match &rec[5] {
            "" => None,
            s => Some(
                s.parse::<f64>()
                    .map_err(|_| Error::parse(path, line, format!("bad probability {s:?}")))?,
            ),
        };
        points.push(TimelinePoint {
            start: parse_timestamp(&rec[2])?,
            end: parse_timestamp(&rec[3])?,
            n_tweets: rec[4]
                .parse()
                .map_err(|_| Error::parse(path, line, "bad tweet count"))?,
            probability,
        });
    }
    let user_id = user_id.ok_or_else(|| Error::parse(path, 1, "timeline has no rows"))?;
    Ok(OnsetTimeline { user_id, points })
}

/// Keeps filenames portable for arbitrary user ids.
pub fn file_stem(user_id: &str) -> String {
    user_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Per-window membership: 0 none, 1 prodrome member, 2 trigger window.
fn membership(n: usize, intervals: &[ProdromeInterval]) -> Vec<u8> {
    let mut m = vec![0u8; n];
    for iv in intervals {
        for &i in &iv.members {
            m[i] = 1;
        }
        m[iv.trigger] = 2;
    }
    m
}

pub fn write_prodrome_csv(t: &OnsetTimeline, intervals: &[ProdromeInterval], w: impl std::io::Write) -> Result<()> {
    let flags = membership(t.points.len(), intervals);
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["window_id", "window_start", "window_end", "probability", "in_prodrome", "is_trigger"])?;
    for (i, p) in t.points.iter().enumerate() {
        out.write_record([
            (i + 1).to_string(),
            format_timestamp(&p.start),
            format_timestamp(&p.end),
            p.probability.map(|x| x.to_string()).unwrap_or_default(),
            u8::from(flags[i] == 1).to_string(),
            u8::from(flags[i] == 2).to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

const W: f64 = 800.0;
const H: f64 = 300.0;
const PAD: f64 = 40.0;

pub fn render_svg(t: &OnsetTimeline, intervals: &[ProdromeInterval], bounds: &ProdromeBounds) -> String {
    let n = t.points.len().max(1);
    let plot_w = W - 2.0 * PAD;
    let plot_h = H - 2.0 * PAD;
    let x_of = |i: f64| PAD + if n == 1 { plot_w / 2.0 } else { i * plot_w / (n - 1) as f64 };
    let y_of = |p: f64| PAD + (1.0 - p) * plot_h;
    let half = if n == 1 { plot_w / 4.0 } else { plot_w / (n - 1) as f64 / 2.0 };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, "<title>Onset timeline for {}</title>", xml_escape(&t.user_id));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    for iv in intervals {
        let x0 = x_of(iv.members[0] as f64) - half;
        let x1 = x_of(*iv.members.last().unwrap() as f64) + half;
        let _ = writeln!(
            s,
            r##"<rect class="prodrome" x="{:.2}" y="{PAD}" width="{:.2}" height="{plot_h}" fill="#f4a261" fill-opacity="0.35" stroke="#e76f51"/>"##,
            x0,
            x1 - x0
        );
    }
    for (label, p) in [("lower", bounds.lower), ("upper", bounds.upper)] {
        let y = y_of(p);
        let _ = writeln!(
            s,
            r##"<line class="{label}" x1="{PAD}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
            W - PAD
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        H - PAD,
        W - PAD,
        H - PAD
    );
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{:.2}" stroke="black"/>"#, H - PAD);
    let pts: Vec<String> = t
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.probability.map(|l| format!("{:.2},{:.2}", x_of(i as f64), y_of(l))))
        .collect();
    if !pts.is_empty() {
        let _ = writeln!(
            s,
            r##"<polyline class="probability" points="{}" fill="none" stroke="#264653" stroke-width="1.5"/>"##,
            pts.join(" ")
        );
    }
    if let (Some(first), Some(last)) = (t.points.first(), t.points.last()) {
        let _ = writeln!(
            s,
            r#"<text x="{PAD}" y="{:.2}" font-size="11">{}</text>"#,
            H - PAD / 3.0,
            format_timestamp(&first.end)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
            W - PAD,
            H - PAD / 3.0,
            format_timestamp(&last.end)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `prodrome_<user>.csv` and `prodrome_<user>.svg` into `out_dir`.
pub fn emit_timeline_artifacts(
    t: &OnsetTimeline,
    intervals: &[ProdromeInterval],
    bounds: &ProdromeBounds,
    out_dir: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf)> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = file_stem(&t.user_id);
    let csv_path = dir.join(format!("prodrome_{stem}.csv"));
    let svg_path = dir.join(format!("prodrome_{stem}.svg"));
    let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_prodrome_csv(t, intervals, std::io::BufWriter::new(f))?;
    std::fs::write(&svg_path, render_svg(t, intervals, bounds)).map_err(|e| Error::io(&svg_path, e))?;
    Ok((csv_path, svg_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn ids(v: &[ProdromeInterval]) -> Vec<Vec<usize>> {
        v.iter().map(|iv| iv.members.iter().map(|i| i + 1).collect()).collect()
    }

    fn some(p: &[f64]) -> Vec<Option<f64>> {
        p.iter().copied().map(Some).collect()
    }

    #[test]
    fn hand_trace() {
        let r = locate_prodrome(&some(&[0.1, 0.5, 0.6, 0.9, 0.2, 0.4, 0.8]), &ProdromeBounds::default()).unwrap();
        assert_eq!(ids(&r), vec![vec![2, 3], vec![6]]);
        assert_eq!(r[0].trigger, 3);
        assert_eq!(r[1].trigger, 6);
    }

    #[test]
    fn minimal_and_empty_cases() {
        let b = ProdromeBounds::default();
        assert_eq!(ids(&locate_prodrome(&some(&[0.5, 0.9]), &b).unwrap()), vec![vec![1]]);
        assert!(locate_prodrome(&some(&[0.1, 0.2, 0.0]), &b).unwrap().is_empty());
        assert!(locate_prodrome(&some(&[0.5, 0.6]), &b).unwrap().is_empty());
        assert!(locate_prodrome(&some(&[0.9, 0.95]), &b).unwrap().is_empty());
    }

    #[test]
    fn below_lower_does_not_clear_by_default() {
        let p = some(&[0.5, 0.1, 0.6, 0.9]);
        let b = ProdromeBounds::default();
        assert_eq!(ids(&locate_prodrome(&p, &b).unwrap()), vec![vec![1, 3]]);
        let c = ProdromeBounds { clear_below_lower: true, ..b };
        assert_eq!(ids(&locate_prodrome(&p, &c).unwrap()), vec![vec![3]]);
    }

    #[test]
    fn bounds_are_inclusive_and_undefined_is_transparent() {
        let p = vec![Some(0.3), None, Some(0.7), Some(0.7000001)];
        assert_eq!(ids(&locate_prodrome(&p, &ProdromeBounds::default()).unwrap()), vec![vec![1, 3]]);
    }

    #[test]
    fn bad_bounds_rejected() {
        let b = ProdromeBounds { lower: 0.7, upper: 0.3, clear_below_lower: false };
        assert!(locate_prodrome(&[], &b).is_err());
    }

    fn timeline(p: &[Option<f64>]) -> OnsetTimeline {
        let t0 = Utc.with_ymd_and_hms(2016, 1, 1, 0, 0, 0).unwrap();
        OnsetTimeline {
            user_id: "u<1>".into(),
            points: p
                .iter()
                .enumerate()
                .map(|(i, &probability)| TimelinePoint {
                    start: t0 + Duration::days(7 * i as i64),
                    end: t0 + Duration::days(60 + 7 * i as i64),
                    n_tweets: 3,
                    probability,
                })
                .collect(),
        }
    }

    #[test]
    fn artifacts_are_consistent() {
        let probs = some(&[0.1, 0.5, 0.6, 0.9, 0.2, 0.4, 0.8]);
        let t = timeline(&probs);
        let b = ProdromeBounds::default();
        let iv = locate_prodrome(&probs, &b).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (csv_path, svg_path) = emit_timeline_artifacts(&t, &iv, &b, dir.path()).unwrap();
        let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
        let flags: Vec<String> = rdr.records().map(|r| r.unwrap()[4].to_string()).collect();
        assert_eq!(flags, ["0", "1", "1", "0", "0", "1", "0"]);
        let svg = std::fs::read_to_string(svg_path).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let boxes = doc.descendants().filter(|n| n.attribute("class") == Some("prodrome")).count();
        assert_eq!(boxes, 2);
    }

    #[test]
    fn timeline_csv_round_trip() {
        let t = timeline(&[Some(0.25), None, Some(1.0)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_timeline_csv(&t, std::fs::File::create(&path).unwrap()).unwrap();
        assert_eq!(read_timeline_csv(&path).unwrap(), t);
    }

    /// Line-by-line transcription of the pseudocode, written independently.
    fn pseudocode(probs: &[Option<f64>], lo: f64, hi: f64) -> Vec<Vec<usize>> {
        let mut s_all: Vec<Vec<usize>> = vec![];
        let mut s_k: Vec<usize> = vec![];
        let mut q = 0;
        while q < probs.len() {
            if let Some(l) = probs[q] {
                if lo <= l && l <= hi {
                    s_k.push(q);
                }
                if l > hi && !s_k.is_empty() {
                    s_all.push(s_k.clone());
                    s_k = vec![];
                }
            }
            q += 1;
        }
        s_all
    }

    proptest! {
        #[test]
        fn matches_pseudocode(p in prop::collection::vec(prop::option::weighted(0.9, 0.0f64..=1.0), 0..50)) {
            let got = locate_prodrome(&p, &ProdromeBounds::default()).unwrap();
            let members: Vec<Vec<usize>> = got.iter().map(|iv| iv.members.clone()).collect();
            prop_assert_eq!(members, pseudocode(&p, 0.3, 0.7));
            for w in got.windows(2) {
                prop_assert!(w[0].trigger < w[1].members[0]);
            }
            for iv in &got {
                prop_assert!(p[iv.trigger].unwrap() > 0.7);
                prop_assert!(*iv.members.last().unwrap() < iv.trigger);
            }
        }
    }
}
