//! CSV driving logs.
//!
//! One record per row. Lane lines occupy columns `lane0, lane1, ...` and
//! tracks repeated groups `trk{i}_id, trk{i}_dx, trk{i}_dy, trk{i}_dvx,
//! trk{i}_dvy`; absent entries are empty cells. Column names are mapped
//! through a [`LogSchema`]. Lines starting with `#` are comments.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use riskgraph_core::{DriverLogRecord, TrackObservation};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

/// Maps record fields to CSV column names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogSchema {
    /// Optional column separating logs stored in one file.
    pub log_id: Option<String>,
    pub timestamp: String,
    pub ax: String,
    pub ay: String,
    pub steer: String,
    pub brake: String,
    pub throttle: String,
    pub vx: String,
    pub vy: String,
    /// Prefix of the numbered lane-line columns.
    pub lane_prefix: String,
    /// Prefix of the numbered track column groups.
    pub track_prefix: String,
    pub cipv_id: Option<String>,
}

impl Default for LogSchema {
    fn default() -> Self {
        let s = |x: &str| x.to_owned();
        Self {
            log_id: Some(s("log_id")),
            timestamp: s("timestamp"),
            ax: s("ax"),
            ay: s("ay"),
            steer: s("steer"),
            brake: s("brake"),
            throttle: s("throttle"),
            vx: s("vx"),
            vy: s("vy"),
            lane_prefix: s("lane"),
            track_prefix: s("trk"),
            cipv_id: Some(s("cipv_id")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedLog {
    pub records: Vec<DriverLogRecord>,
    /// Malformed or out-of-order rows that were dropped.
    pub skipped: usize,
}

struct Columns {
    log_id: Option<usize>,
    scalars: [usize; 8],
    lanes: Vec<usize>,
    tracks: Vec<[usize; 5]>,
    cipv: Option<usize>,
}

impl Columns {
    fn resolve(header: &csv::StringRecord, schema: &LogSchema, path: &Path) -> Result<Self> {
        let index: HashMap<&str, usize> = header
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim(), i))
            .collect();
        let need = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| RunError::data(path, format!("missing required column `{name}`")))
        };
        let scalars = [
            need(&schema.timestamp)?,
            need(&schema.ax)?,
            need(&schema.ay)?,
            need(&schema.steer)?,
            need(&schema.brake)?,
            need(&schema.throttle)?,
            need(&schema.vx)?,
            need(&schema.vy)?,
        ];
        let lanes = (0..)
            .map_while(|i| {
                index
                    .get(format!("{}{i}", schema.lane_prefix).as_str())
                    .copied()
            })
            .collect();
        let mut tracks = Vec::new();
        for i in 0.. {
            let col = |f: &str| format!("{}{i}_{f}", schema.track_prefix);
            if !index.contains_key(col("id").as_str()) {
                break;
            }
            tracks.push([
                need(&col("id"))?,
                need(&col("dx"))?,
                need(&col("dy"))?,
                need(&col("dvx"))?,
                need(&col("dvy"))?,
            ]);
        }
        let optional = |name: &Option<String>| name.as_deref().and_then(|n| index.get(n).copied());
        Ok(Self {
            log_id: optional(&schema.log_id),
            scalars,
            lanes,
            tracks,
            cipv: optional(&schema.cipv_id),
        })
    }

    fn record(&self, row: &csv::StringRecord) -> Option<DriverLogRecord> {
        let cell = |i: usize| row.get(i).map(str::trim).unwrap_or("");
        let num = |i: usize| cell(i).parse::<f64>().ok();
        let mut s = [0.0; 8];
        for (dst, &c) in s.iter_mut().zip(&self.scalars) {
            *dst = num(c)?;
        }
        let log_id = match self.log_id {
            Some(c) if !cell(c).is_empty() => cell(c).parse().ok()?,
            _ => 0,
        };
        let mut lane_offsets = Vec::new();
        for &c in &self.lanes {
            if !cell(c).is_empty() {
                lane_offsets.push(num(c)?);
            }
        }
        let mut tracks = Vec::new();
        for group in &self.tracks {
            let empty = group.iter().filter(|&&c| cell(c).is_empty()).count();
            match empty {
                5 => continue,
                0 => tracks.push(TrackObservation {
                    track_id: cell(group[0]).parse().ok()?,
                    dx: num(group[1])?,
                    dy: num(group[2])?,
                    dvx: num(group[3])?,
                    dvy: num(group[4])?,
                }),
                _ => return None,
            }
        }
        let cipv_id = match self.cipv {
            Some(c) if !cell(c).is_empty() => Some(cell(c).parse().ok()?),
            _ => None,
        };
        let r = DriverLogRecord {
            log_id,
            timestamp: s[0],
            ax: s[1],
            ay: s[2],
            steer: s[3],
            brake: s[4],
            throttle: s[5],
            vx: s[6],
            vy: s[7],
            lane_offsets,
            tracks,
            cipv_id,
        };
        r.validate().is_ok().then_some(r)
    }
}

/// Parses CSV content. Rows that fail to parse, violate record invariants
/// or break the timestamp order of their log are skipped and counted.
pub fn parse_log<R: Read>(input: R, schema: &LogSchema, path: &Path) -> Result<ParsedLog> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| RunError::data(path, e))?
        .clone();
    let columns = Columns::resolve(&header, schema, path)?;
    let mut records: Vec<DriverLogRecord> = Vec::new();
    let mut skipped = 0;
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(RunError::data(path, e)),
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        if row.len() != header.len() {
            skipped += 1;
            continue;
        }
        match columns.record(&row) {
            Some(r)
                if records
                    .last()
                    .is_none_or(|p| p.log_id != r.log_id || p.timestamp < r.timestamp) =>
            {
                records.push(r)
            }
            _ => skipped += 1,
        }
    }
    if records.is_empty() {
        return Err(RunError::data(path, "no valid rows"));
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed rows", path.display());
    }
    Ok(ParsedLog { records, skipped })
}

pub fn read_log(path: &Path, schema: &LogSchema) -> Result<ParsedLog> {
    let file = File::open(path).map_err(|e| RunError::io(path, e))?;
    parse_log(file, schema, path)
}

/// Writes the canonical layout (default schema) with an optional comment
/// line. Floats use the shortest representation that parses back exactly.
pub fn write_log<W: Write>(
    out: W,
    records: &[DriverLogRecord],
    comment: Option<&str>,
) -> std::io::Result<()> {
    let mut out = out;
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    let lanes = records
        .iter()
        .map(|r| r.lane_offsets.len())
        .max()
        .unwrap_or(0);
    let tracks = records.iter().map(|r| r.tracks.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "log_id",
        "timestamp",
        "ax",
        "ay",
        "steer",
        "brake",
        "throttle",
        "vx",
        "vy",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..lanes).map(|i| format!("lane{i}")));
    header.push("cipv_id".into());
    for i in 0..tracks {
        for f in ["id", "dx", "dy", "dvx", "dvy"] {
            header.push(format!("trk{i}_{f}"));
        }
    }
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for r in records {
        row.clear();
        row.push(r.log_id.to_string());
        row.extend(
            [
                r.timestamp,
                r.ax,
                r.ay,
                r.steer,
                r.brake,
                r.throttle,
                r.vx,
                r.vy,
            ]
            .map(|v| v.to_string()),
        );
        row.extend((0..lanes).map(|i| {
            r.lane_offsets
                .get(i)
                .map(f64::to_string)
                .unwrap_or_default()
        }));
        row.push(r.cipv_id.map(|c| c.to_string()).unwrap_or_default());
        for i in 0..tracks {
            match r.tracks.get(i) {
                Some(t) => {
                    row.push(t.track_id.to_string());
                    row.extend([t.dx, t.dy, t.dvx, t.dvy].map(|v| v.to_string()));
                }
                None => row.extend(std::iter::repeat_n(String::new(), 5)),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn save_log(path: &Path, records: &[DriverLogRecord], comment: Option<&str>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| RunError::io(path, e))?;
    write_log(std::io::BufWriter::new(file), records, comment).map_err(|e| RunError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P: &str = "mem.csv";

    fn parse(text: &str) -> Result<ParsedLog> {
        parse_log(text.as_bytes(), &LogSchema::default(), Path::new(P))
    }

    #[test]
    fn absent_tracks_are_empty_groups() {
        let text = "\
log_id,timestamp,ax,ay,steer,brake,throttle,vx,vy,lane0,lane1,cipv_id,trk0_id,trk0_dx,trk0_dy,trk0_dvx,trk0_dvy,trk1_id,trk1_dx,trk1_dy,trk1_dvx,trk1_dvy
0,0,-0.5,0,0,0.1,0,15,0,-1.8,1.8,4,4,0.2,20,0,-1,,,,,
0,0.04,-0.6,0,0,0.1,0,15,0,-1.8,1.8,,4,0.2,19.9,0,-1,9,3.5,40,0.1,0
";
        let log = parse(text).unwrap();
        assert_eq!(log.skipped, 0);
        assert_eq!(log.records.len(), 2);
        assert_eq!(log.records[0].tracks.len(), 1);
        assert_eq!(log.records[0].cipv_id, Some(4));
        assert_eq!(log.records[1].tracks[1].track_id, 9);
        assert_eq!(log.records[1].cipv_id, None);
        assert_eq!(log.records[1].lane_offsets, vec![-1.8, 1.8]);
    }

    #[test]
    fn malformed_rows_are_skipped_and_counted() {
        let text = "\
# comment
timestamp,ax,ay,steer,brake,throttle,vx,vy,lane0,lane1,trk0_id,trk0_dx,trk0_dy,trk0_dvx,trk0_dvy
0,0,0,0,0,0,10,0,-1.8,1.8,,,,,
0.04,abc,0,0,0,0,10,0,-1.8,1.8,,,,,
0.08,0,0,0,0,0,10,0,-1.8,1.8,3,0.5,,1,1
0,0,0,0,0,0,10,0,-1.8,1.8,,,,,
0.12,0,0,0,0,0,10,0
0.16,0,0,0,0,0,10,0,-1.8,1.8,,,,,
";
        let log = parse(text).unwrap();
        assert_eq!(log.records.len(), 2);
        assert_eq!(log.skipped, 4);
        assert_eq!(log.records[1].timestamp, 0.16);
    }

    #[test]
    fn schema_errors() {
        let err = parse("timestamp,ax\n0,0\n").unwrap_err();
        assert!(
            err.to_string().contains("missing required column `ay`"),
            "{err}"
        );
        let header = "timestamp,ax,ay,steer,brake,throttle,vx,vy\n";
        assert!(parse(&format!("{header}x,0,0,0,0,0,0,0\n")).is_err());

        let schema: LogSchema =
            serde_json::from_str(r#"{"timestamp": "t", "log_id": null}"#).unwrap();
        let text = "t,ax,ay,steer,brake,throttle,vx,vy\n0,0,0,0,0,0,10,0\n";
        let log = parse_log(text.as_bytes(), &schema, Path::new(P)).unwrap();
        assert_eq!(log.records.len(), 1);
        assert!(serde_json::from_str::<LogSchema>(r#"{"timestamps": "t"}"#).is_err());
    }

    fn record() -> impl Strategy<Value = DriverLogRecord> {
        let track = (
            0u32..50,
            -9.0f64..9.0,
            -30.0f64..100.0,
            -3.0f64..3.0,
            -10.0f64..10.0,
        )
            .prop_map(|(track_id, dx, dy, dvx, dvy)| TrackObservation {
                track_id,
                dx,
                dy,
                dvx,
                dvy,
            });
        (
            (
                -8.0f64..3.0,
                -2.0f64..2.0,
                -0.5f64..0.5,
                0.0f64..1.0,
                0.0f64..1.0,
                0.0f64..40.0,
            ),
            proptest::collection::vec(-6.0f64..6.0, 0..4),
            proptest::collection::vec(track, 0..4),
            proptest::option::of(0u32..50),
        )
            .prop_map(
                |((ax, ay, steer, brake, throttle, vx), mut lanes, tracks, cipv_id)| {
                    lanes.sort_by(f64::total_cmp);
                    lanes.dedup();
                    DriverLogRecord {
                        log_id: 0,
                        timestamp: 0.0,
                        ax,
                        ay,
                        steer,
                        brake,
                        throttle,
                        vx,
                        vy: 0.0,
                        lane_offsets: lanes,
                        tracks,
                        cipv_id,
                    }
                },
            )
    }

    proptest! {
        #[test]
        fn canonical_writer_round_trips(mut records in proptest::collection::vec(record(), 1..12)) {
            for (i, r) in records.iter_mut().enumerate() {
                r.timestamp = i as f64 * 0.04;
                r.log_id = (i / 5) as u32;
            }
            records.retain(|r| r.validate().is_ok());
            prop_assume!(!records.is_empty());
            let mut buf = Vec::new();
            write_log(&mut buf, &records, Some("config_digest=abc")).unwrap();
            let back = parse_log(buf.as_slice(), &LogSchema::default(), Path::new(P)).unwrap();
            prop_assert_eq!(back.skipped, 0);
            prop_assert_eq!(back.records, records);
        }
    }
}
