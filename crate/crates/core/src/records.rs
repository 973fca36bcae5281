//! CSV records shared by the detector, tracker, evaluation and generator.
//!
//! Ground truth: `frame,id,x,y[,world_x,world_y]` (world in metres).
//! Detections: `frame,x,y,score,source,bbox_poly` with the polygon as
//! `x y` vertices joined by `;`.
//! Tracks: `frame,track_id,x,y,weight`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Direct,
    Regression,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Direct => "direct",
            Source::Regression => "regression",
        })
    }
}

impl FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Source::Direct),
            "regression" => Ok(Source::Regression),
            _ => Err(Error::Format(format!("unknown detection source {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub source: Source,
    pub bbox: Vec<(f64, f64)>,
}

impl Detection {
    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtPoint {
    pub frame: usize,
    pub id: u64,
    pub x: f64,
    pub y: f64,
    /// Ground position in metres, when known.
    pub world: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackPoint {
    pub frame: usize,
    pub track_id: u64,
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

fn format_poly(poly: &[(f64, f64)]) -> String {
    poly.iter()
        .map(|(x, y)| format!("{x:.2} {y:.2}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_poly(s: &str) -> Result<Vec<(f64, f64)>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|v| {
            let mut it = v.split_whitespace().map(f64::from_str);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => Ok((x, y)),
                _ => Err(Error::Format(format!("bad polygon vertex {v:?}"))),
            }
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        k => Error::Format(format!("{k:?}")),
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r)
}

fn check_header<R: Read>(r: &mut csv::Reader<R>, expect: &[&str], what: &str) -> Result<()> {
    let h = r.headers().map_err(csv_err)?;
    let got: Vec<&str> = h.iter().collect();
    if got.len() < expect.len() || got[..expect.len()] != *expect {
        return Err(Error::Format(format!(
            "{what} header must start with {}, got {}",
            expect.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<T> {
    rec.get(i)
        .ok_or_else(|| Error::Format(format!("line {line}: missing {name}")))?
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: bad {name} {:?}", rec.get(i).unwrap())))
}

fn finite(v: f64, name: &str, line: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Format(format!("line {line}: {name} is not finite")))
    }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

pub fn read_detections_from<R: Read>(r: R) -> Result<Vec<Detection>> {
    let mut rd = reader(r);
    check_header(&mut rd, &["frame", "x", "y", "score", "source", "bbox_poly"], "detections")?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let l = line_of(&rec);
        out.push(Detection {
            frame: field(&rec, 0, "frame", l)?,
            x: finite(field(&rec, 1, "x", l)?, "x", l)?,
            y: finite(field(&rec, 2, "y", l)?, "y", l)?,
            score: finite(field(&rec, 3, "score", l)?, "score", l)?,
            source: field::<String>(&rec, 4, "source", l)?.parse()?,
            bbox: parse_poly(rec.get(5).unwrap_or(""))?,
        });
    }
    Ok(out)
}

pub fn write_detections_to<W: Write>(w: W, dets: &[Detection]) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    writeln!(w, "frame,x,y,score,source,bbox_poly")?;
    for d in dets {
        writeln!(
            w,
            "{},{:.3},{:.3},{:.4},{},{}",
            d.frame,
            d.x,
            d.y,
            d.score,
            d.source,
            format_poly(&d.bbox)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gt_from<R: Read>(r: R) -> Result<Vec<GtPoint>> {
    let mut rd = reader(r);
    check_header(&mut rd, &["frame", "id", "x", "y"], "ground truth")?;
    let has_world = {
        let h = rd.headers().map_err(csv_err)?;
        h.get(4) == Some("world_x") && h.get(5) == Some("world_y")
    };
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let l = line_of(&rec);
        let world = if has_world && rec.len() >= 6 && !rec[4].is_empty() && !rec[5].is_empty() {
            Some((
                finite(field(&rec, 4, "world_x", l)?, "world_x", l)?,
                finite(field(&rec, 5, "world_y", l)?, "world_y", l)?,
            ))
        } else {
            None
        };
        out.push(GtPoint {
            frame: field(&rec, 0, "frame", l)?,
            id: field(&rec, 1, "id", l)?,
            x: finite(field(&rec, 2, "x", l)?, "x", l)?,
            y: finite(field(&rec, 3, "y", l)?, "y", l)?,
            world,
        });
    }
    Ok(out)
}

pub fn write_gt_to<W: Write>(w: W, gt: &[GtPoint]) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    let with_world = gt.iter().any(|g| g.world.is_some());
    if with_world {
        writeln!(w, "frame,id,x,y,world_x,world_y")?;
    } else {
        writeln!(w, "frame,id,x,y")?;
    }
    for g in gt {
        write!(w, "{},{},{:.4},{:.4}", g.frame, g.id, g.x, g.y)?;
        match (with_world, g.world) {
            (true, Some((wx, wy))) => writeln!(w, ",{wx:.6},{wy:.6}")?,
            (true, None) => writeln!(w, ",,")?,
            _ => writeln!(w)?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_tracks_from<R: Read>(r: R) -> Result<Vec<TrackPoint>> {
    let mut rd = reader(r);
    check_header(&mut rd, &["frame", "track_id", "x", "y", "weight"], "tracks")?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let l = line_of(&rec);
        out.push(TrackPoint {
            frame: field(&rec, 0, "frame", l)?,
            track_id: field(&rec, 1, "track_id", l)?,
            x: finite(field(&rec, 2, "x", l)?, "x", l)?,
            y: finite(field(&rec, 3, "y", l)?, "y", l)?,
            weight: finite(field(&rec, 4, "weight", l)?, "weight", l)?,
        });
    }
    Ok(out)
}

pub fn write_tracks_to<W: Write>(w: W, tracks: &[TrackPoint]) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    writeln!(w, "frame,track_id,x,y,weight")?;
    for t in tracks {
        writeln!(w, "{},{},{:.3},{:.3},{:.4}", t.frame, t.track_id, t.x, t.y, t.weight)?;
    }
    w.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path)
        .map_err(|e| Error::MissingData(format!("cannot open {}: {e}", path.display())))
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    read_detections_from(open(path)?)
}

pub fn write_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    write_detections_to(std::fs::File::create(path)?, dets)
}

pub fn read_gt(path: &Path) -> Result<Vec<GtPoint>> {
    read_gt_from(open(path)?)
}

pub fn write_gt(path: &Path, gt: &[GtPoint]) -> Result<()> {
    write_gt_to(std::fs::File::create(path)?, gt)
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackPoint>> {
    read_tracks_from(open(path)?)
}

pub fn write_tracks(path: &Path, tracks: &[TrackPoint]) -> Result<()> {
    write_tracks_to(std::fs::File::create(path)?, tracks)
}

/// Groups items by frame index, preserving input order within a frame.
pub fn by_frame<T: Clone>(items: &[T], frame: impl Fn(&T) -> usize) -> BTreeMap<usize, Vec<T>> {
    let mut m: BTreeMap<usize, Vec<T>> = BTreeMap::new();
    for it in items {
        m.entry(frame(it)).or_default().push(it.clone());
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detections_round_trip() {
        let dets = vec![
            Detection {
                frame: 3,
                x: 104.5,
                y: 61.25,
                score: 0.9871,
                source: Source::Direct,
                bbox: vec![(100.0, 58.0), (109.0, 58.0), (109.0, 64.0)],
            },
            Detection {
                frame: 4,
                x: 10.0,
                y: 20.0,
                score: 0.5,
                source: Source::Regression,
                bbox: vec![],
            },
        ];
        let mut buf = Vec::new();
        write_detections_to(&mut buf, &dets).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("3,104.500,61.250,0.9871,direct,100.00 58.00;109.00 58.00;109.00 64.00"));
        assert_eq!(read_detections_from(&buf[..]).unwrap(), dets);
    }

    #[test]
    fn gt_with_and_without_world() {
        let text = "frame,id,x,y\n0,1,5.5,6\n1,1,7,8\n";
        let gt = read_gt_from(text.as_bytes()).unwrap();
        assert_eq!(gt.len(), 2);
        assert!(gt.iter().all(|g| g.world.is_none()));
        let text = "frame,id,x,y,world_x,world_y\n0,2,1,2,0.25,0.5\n";
        let gt = read_gt_from(text.as_bytes()).unwrap();
        assert_eq!(gt[0].world, Some((0.25, 0.5)));
        let mut buf = Vec::new();
        write_gt_to(&mut buf, &gt).unwrap();
        assert_eq!(read_gt_from(&buf[..]).unwrap(), gt);
    }

    #[test]
    fn tracks_round_trip_and_empty() {
        let t = vec![TrackPoint {
            frame: 2,
            track_id: 7,
            x: 1.5,
            y: 2.5,
            weight: 0.75,
        }];
        let mut buf = Vec::new();
        write_tracks_to(&mut buf, &t).unwrap();
        assert_eq!(read_tracks_from(&buf[..]).unwrap(), t);
        assert!(read_tracks_from("frame,track_id,x,y,weight\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn malformed_rows_are_format_errors() {
        assert!(matches!(
            read_gt_from("frame,id,x,y\n0,1,abc,2\n".as_bytes()),
            Err(Error::Format(_))
        ));
        assert!(matches!(read_gt_from("a,b\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(
            read_detections_from("frame,x,y,score,source,bbox_poly\n0,1,2,0.5,magic,\n".as_bytes()),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_tracks_from("frame,track_id,x,y,weight\n0,1,NaN,2,0.5\n".as_bytes()),
            Err(Error::Format(_))
        ));
    }
}
