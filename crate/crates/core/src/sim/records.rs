use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::service::{IoType, NodeId, Service};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestStatus {
    Completed,
    TimedOut,
    InFlight,
}

impl fmt::Display for RequestStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RequestStatus::Completed => "completed",
            RequestStatus::TimedOut => "timed-out",
            RequestStatus::InFlight => "in-flight",
        })
    }
}

impl FromStr for RequestStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "completed" => Ok(RequestStatus::Completed),
            "timed-out" => Ok(RequestStatus::TimedOut),
            "in-flight" => Ok(RequestStatus::InFlight),
            _ => Err(format!("unknown status `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub service: Service,
    pub node: NodeId,
    /// Run by a relay instead of the host the path selected.
    pub opportunistic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: u64,
    pub origin: NodeId,
    pub input: IoType,
    pub output: IoType,
    pub created: f64,
    pub deadline: f64,
    pub status: RequestStatus,
    pub completed: Option<f64>,
    pub hops: u32,
    pub stages: Vec<StageRecord>,
    /// Cost of the path chosen at creation, in seconds.
    pub estimated_cost: Option<f64>,
}

impl RequestRecord {
    pub fn delay(&self) -> Option<f64> {
        self.completed.map(|c| c - self.created)
    }

    pub fn opportunistic_stages(&self) -> usize {
        self.stages.iter().filter(|s| s.opportunistic).count()
    }

    pub fn is_completed(&self) -> bool {
        self.status == RequestStatus::Completed
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub executed: u64,
    /// Mean of the load estimate over all windows, in seconds.
    pub mean_load: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunResult {
    pub records: Vec<RequestRecord>,
    pub nodes: Vec<NodeStats>,
    pub transfers: u64,
    /// `time,node,request_id,chosen_path,estimated_cost` lines.
    pub decisions: Vec<String>,
    /// `time,request_id,from,to,reason` lines.
    pub transfer_log: Vec<String>,
}

pub const RUN_HEADER: [&str; 12] = [
    "id",
    "origin",
    "in",
    "out",
    "created_s",
    "status",
    "completed_s",
    "delay_s",
    "hops",
    "stages",
    "opportunistic_stages",
    "estimated_cost",
];

fn stage_list(stages: &[StageRecord]) -> String {
    stages
        .iter()
        .map(|s| format!("{}@{}{}", s.service, s.node, if s.opportunistic { "*" } else { "" }))
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_stage(text: &str) -> Option<StageRecord> {
    let (svc, node) = text.split_once('@')?;
    let (node, opportunistic) = match node.strip_suffix('*') {
        Some(n) => (n, true),
        None => (node, false),
    };
    let (x, y) = svc.strip_prefix('s')?.split_once('-')?;
    Some(StageRecord {
        service: Service::new(x.parse().ok()?, y.parse().ok()?),
        node: NodeId(node.parse().ok()?),
        opportunistic,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl RunResult {
    pub fn count(&self, status: RequestStatus) -> usize {
        self.records.iter().filter(|r| r.status == status).count()
    }

    pub fn completion_rate(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.count(RequestStatus::Completed) as f64 / self.records.len() as f64
        }
    }
}

/// Writes records in the run CSV layout. Stages are `service@node`, with a
/// trailing `*` for opportunistic ones, joined by `;`.
pub fn write_records<W: Write>(out: W, records: &[RequestRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_HEADER)?;
    for r in records {
        w.write_record([
            r.id.to_string(),
            r.origin.to_string(),
            r.input.to_string(),
            r.output.to_string(),
            r.created.to_string(),
            r.status.to_string(),
            opt(r.completed),
            opt(r.delay()),
            r.hops.to_string(),
            stage_list(&r.stages),
            r.opportunistic_stages().to_string(),
            opt(r.estimated_cost),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<run>", e))?;
    Ok(())
}

pub fn save_records(path: &Path, records: &[RequestRecord]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(std::io::BufWriter::new(f), records)
}

pub fn load_records(path: &Path) -> Result<Vec<RequestRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(f, path)
}

/// Reads the run CSV. The deadline is not stored and comes back as
/// infinity.
pub fn read_records<R: Read>(input: R, origin: &Path) -> Result<Vec<RequestRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != RUN_HEADER {
        return Err(Error::parse(origin, 1, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        let field = |j: usize| rec[j].trim();
        let bad = |what: &str| Error::parse(origin, line, format!("bad {what}"));
        let num = |j: usize, what: &str| field(j).parse::<f64>().map_err(|_| bad(what));
        let optnum = |j: usize, what: &str| -> Result<Option<f64>> {
            if field(j).is_empty() {
                Ok(None)
            } else {
                num(j, what).map(Some)
            }
        };
        let stages = if field(9).is_empty() {
            Vec::new()
        } else {
            field(9)
                .split(';')
                .map(|s| parse_stage(s).ok_or_else(|| bad("stages")))
                .collect::<Result<_>>()?
        };
        out.push(RequestRecord {
            id: field(0).parse().map_err(|_| bad("id"))?,
            origin: NodeId(field(1).parse().map_err(|_| bad("origin"))?),
            input: IoType(field(2).parse().map_err(|_| bad("in"))?),
            output: IoType(field(3).parse().map_err(|_| bad("out"))?),
            created: num(4, "created_s")?,
            deadline: f64::INFINITY,
            status: field(5).parse().map_err(|e: String| Error::parse(origin, line, e))?,
            completed: optnum(6, "completed_s")?,
            hops: field(8).parse().map_err(|_| bad("hops"))?,
            stages,
            estimated_cost: optnum(11, "estimated_cost")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<RequestRecord> {
        vec![
            RequestRecord {
                id: 0,
                origin: NodeId(3),
                input: IoType(1),
                output: IoType(5),
                created: 12.5,
                deadline: f64::INFINITY,
                status: RequestStatus::Completed,
                completed: Some(300.0),
                hops: 3,
                stages: vec![
                    StageRecord {
                        service: Service::new(1, 3),
                        node: NodeId(4),
                        opportunistic: false,
                    },
                    StageRecord {
                        service: Service::new(3, 5),
                        node: NodeId(7),
                        opportunistic: true,
                    },
                ],
                estimated_cost: Some(240.0),
            },
            RequestRecord {
                id: 1,
                origin: NodeId(0),
                input: IoType(2),
                output: IoType(6),
                created: 40.0,
                deadline: f64::INFINITY,
                status: RequestStatus::TimedOut,
                completed: None,
                hops: 0,
                stages: vec![],
                estimated_cost: None,
            },
        ]
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_records(&mut buf, &sample()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "id,origin,in,out,created_s,status,completed_s,delay_s,hops,stages,opportunistic_stages,estimated_cost\n"
        ));
        assert!(text.contains("0,3,1,5,12.5,completed,300,287.5,3,s1-3@4;s3-5@7*,1,240\n"));
        let back = read_records(buf.as_slice(), Path::new("run.csv")).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn rejects_foreign_header() {
        let err = read_records("a,b\n1,2\n".as_bytes(), Path::new("x.csv")).unwrap_err();
        assert!(err.to_string().contains("x.csv:1"));
    }
}
