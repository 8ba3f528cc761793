use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contact::{contacts_from_positions, ContactTrace};
use crate::error::{Error, Result};
use crate::mobility::{
    generate_hcmm, generate_levy, generate_slaw, ingest_gps_log, Area, GpsOptions, HcmmParams, LevyWalkParams,
    PositionTrace, SlawParams,
};
use crate::sim::SimConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Levy,
    Slaw,
    Hcmm,
    /// Position trace CSV at `path`.
    Trace,
    /// Contact CSV at `path`.
    Contacts,
    /// GPS track logs listed in `files`.
    Gps,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        toml::Value::String(s.to_owned())
            .try_into()
            .map_err(|_| Error::Config(format!("unknown mobility model `{s}`")))
    }
}

/// Where contacts come from. Only the table for the selected model is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilitySpec {
    pub model: ModelKind,
    pub nodes: usize,
    pub duration_s: f64,
    pub sample_s: f64,
    pub range_m: f64,
    /// Overrides the selected model's area with a square of this side.
    pub side_m: Option<f64>,
    pub path: Option<PathBuf>,
    pub files: Vec<PathBuf>,
    pub levy: LevyWalkParams,
    pub slaw: SlawParams,
    pub hcmm: HcmmParams,
    pub gps: GpsOptions,
}

impl Default for MobilitySpec {
    fn default() -> Self {
        MobilitySpec {
            model: ModelKind::Levy,
            nodes: 20,
            duration_s: 36_000.0,
            sample_s: 30.0,
            range_m: 100.0,
            side_m: None,
            path: None,
            files: Vec::new(),
            levy: LevyWalkParams::default(),
            slaw: SlawParams::default(),
            hcmm: HcmmParams::default(),
            gps: GpsOptions::default(),
        }
    }
}

impl MobilitySpec {
    /// Reads a standalone mobility table.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e: toml::de::Error| toml_error(path, &text, &e))
    }

    fn resolve(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            base.join(p)
        }
    }

    fn need_path(&self) -> Result<&Path> {
        self.path
            .as_deref()
            .ok_or_else(|| Error::Config(format!("mobility model {:?} needs `path`", self.model)))
    }

    /// Positions for the synthetic and file-backed models. Relative paths
    /// resolve against `base`.
    pub fn positions(&self, seed: u64, base: &Path) -> Result<PositionTrace> {
        let area = self.side_m.map(Area::square);
        match self.model {
            ModelKind::Levy => {
                let mut p = self.levy.clone();
                if let Some(a) = area {
                    p.area = a;
                }
                generate_levy(&p, self.nodes, self.duration_s, self.sample_s, seed)
            }
            ModelKind::Slaw => {
                let mut p = self.slaw.clone();
                if let Some(a) = area {
                    p.area = a;
                }
                generate_slaw(&p, self.nodes, self.duration_s, self.sample_s, seed)
            }
            ModelKind::Hcmm => {
                let mut p = self.hcmm.clone();
                if let Some(a) = area {
                    p.area = a;
                }
                generate_hcmm(&p, self.nodes, self.duration_s, self.sample_s, seed)
            }
            ModelKind::Trace => PositionTrace::load(&self.resolve(base, self.need_path()?)),
            ModelKind::Gps => {
                if self.files.is_empty() {
                    return Err(Error::Config("mobility model gps needs `files`".into()));
                }
                let files: Vec<PathBuf> = self.files.iter().map(|f| self.resolve(base, f)).collect();
                ingest_gps_log(&files, &self.gps)
            }
            ModelKind::Contacts => Err(Error::Config("a contact file carries no positions".into())),
        }
    }

    pub fn contacts(&self, seed: u64, base: &Path) -> Result<ContactTrace> {
        if self.model == ModelKind::Contacts {
            return ContactTrace::load(&self.resolve(base, self.need_path()?));
        }
        if !(self.range_m > 0.0) {
            return Err(Error::Config(format!("range_m must be positive, got {}", self.range_m)));
        }
        Ok(contacts_from_positions(&self.positions(seed, base)?, self.range_m))
    }
}

/// One fully resolved sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointSpec {
    pub label: String,
    pub mobility: MobilitySpec,
    pub sim: SimConfig,
}

impl Default for PointSpec {
    fn default() -> Self {
        PointSpec {
            label: "base".into(),
            mobility: MobilitySpec::default(),
            sim: SimConfig::default(),
        }
    }
}

/// A declarative experiment: a base point, named variants deep-merged over
/// it, and a grid of dotted-key sweeps crossed with every variant.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub seeds: u32,
    pub first_seed: u64,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    /// Directory relative mobility paths resolve against.
    pub base_dir: PathBuf,
    pub points: Vec<PointSpec>,
}

const TOP_KEYS: [&str; 8] = ["name", "seeds", "first_seed", "workers", "out", "mobility", "sim", "variant"];

fn merge(into: &mut toml::Table, from: &toml::Table) {
    for (k, v) in from {
        match (into.get_mut(k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            _ => {
                into.insert(k.clone(), v.clone());
            }
        }
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("bad sweep key `{key}`")))?;
    let mut t = table;
    for p in parts {
        let entry = t.entry(p.to_owned()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("sweep key `{key}` crosses a non-table value")))?;
    }
    t.insert(last.to_owned(), value);
    Ok(())
}

fn short(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("")).to_owned();
        Self::parse(&text, path, base)
    }

    /// Parses spec text; `origin` only labels diagnostics.
    pub fn parse(text: &str, origin: &Path, base_dir: PathBuf) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| toml_error(origin, text, &e))?;
        for k in doc.keys() {
            if k != "sweep" && !TOP_KEYS.contains(&k.as_str()) {
                return Err(Error::parse(origin, key_line(text, k), format!("unknown key `{k}`")));
            }
        }
        let get_int = |k: &str| -> Result<Option<i64>> {
            match doc.get(k) {
                None => Ok(None),
                Some(toml::Value::Integer(i)) => Ok(Some(*i)),
                Some(_) => Err(Error::parse(origin, key_line(text, k), format!("`{k}` must be an integer"))),
            }
        };
        let name = match doc.get("name") {
            None => origin.file_stem().map_or("experiment".into(), |s| s.to_string_lossy().into_owned()),
            Some(toml::Value::String(s)) => s.clone(),
            Some(_) => return Err(Error::parse(origin, key_line(text, "name"), "`name` must be a string")),
        };
        let seeds = get_int("seeds")?.unwrap_or(5);
        if seeds < 1 {
            return Err(Error::parse(origin, key_line(text, "seeds"), "`seeds` must be at least 1"));
        }
        let first_seed = get_int("first_seed")?.unwrap_or(1).max(0) as u64;
        let workers = get_int("workers")?.map(|w| w.max(1) as usize);
        let out = match doc.get("out") {
            None => None,
            Some(toml::Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => return Err(Error::parse(origin, key_line(text, "out"), "`out` must be a string")),
        };

        // Start from the serialized defaults so partial nested tables merge.
        let mut base = match toml::Value::try_from(PointSpec::default()) {
            Ok(toml::Value::Table(t)) => t,
            _ => toml::Table::new(),
        };
        base.remove("label");
        for k in ["mobility", "sim"] {
            if let Some(v) = doc.get(k) {
                let v = v
                    .as_table()
                    .ok_or_else(|| Error::parse(origin, key_line(text, k), format!("`{k}` must be a table")))?;
                merge(&mut base, &toml::Table::from_iter([(k.to_owned(), toml::Value::Table(v.clone()))]));
            }
        }
        let sweep_list = |v: &toml::Value| -> Result<Vec<(String, Vec<toml::Value>)>> {
            let t = v
                .as_table()
                .ok_or_else(|| Error::parse(origin, key_line(text, "sweep"), "`sweep` must be a table"))?;
            t.iter()
                .map(|(k, v)| {
                    v.as_array()
                        .filter(|a| !a.is_empty())
                        .map(|a| (k.clone(), a.clone()))
                        .ok_or_else(|| Error::parse(origin, key_line(text, k), format!("sweep `{k}` needs a non-empty list")))
                })
                .collect()
        };
        let global_sweep = doc.get("sweep").map(sweep_list).transpose()?.unwrap_or_default();

        // (label, overrides, sweep) per variant; a variant's own sweep keys
        // replace or extend the global ones.
        let mut variants: Vec<(String, toml::Table, Vec<(String, Vec<toml::Value>)>)> = Vec::new();
        match doc.get("variant") {
            None => variants.push((String::new(), toml::Table::new(), global_sweep.clone())),
            Some(toml::Value::Array(items)) => {
                for (i, item) in items.iter().enumerate() {
                    let mut t = item
                        .as_table()
                        .cloned()
                        .ok_or_else(|| Error::parse(origin, key_line(text, "variant"), "variants must be tables"))?;
                    let label = match t.remove("name") {
                        Some(toml::Value::String(s)) => s,
                        None => format!("v{i}"),
                        Some(_) => return Err(Error::parse(origin, key_line(text, "name"), "variant `name` must be a string")),
                    };
                    let mut sweep = global_sweep.clone();
                    if let Some(own) = t.remove("sweep") {
                        for (k, vals) in sweep_list(&own)? {
                            match sweep.iter_mut().find(|(g, _)| *g == k) {
                                Some(slot) => slot.1 = vals,
                                None => sweep.push((k, vals)),
                            }
                        }
                    }
                    variants.push((label, t, sweep));
                }
            }
            Some(_) => return Err(Error::parse(origin, key_line(text, "variant"), "use [[variant]] tables")),
        }

        let mut points = Vec::new();
        for (vname, overrides, sweeps) in &variants {
            let mut grid: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
            for (k, vals) in sweeps {
                grid = grid
                    .into_iter()
                    .flat_map(|g| {
                        vals.iter().map(move |v| {
                            let mut g = g.clone();
                            g.push((k.clone(), v.clone()));
                            g
                        })
                    })
                    .collect();
            }
            for g in &grid {
                let mut t = base.clone();
                merge(&mut t, overrides);
                for (k, v) in g {
                    set_dotted(&mut t, k, v.clone())?;
                }
                let mut parts: Vec<String> = Vec::new();
                if !vname.is_empty() {
                    parts.push(vname.clone());
                }
                for (k, v) in g {
                    let leaf = k.rsplit('.').next().unwrap_or(k);
                    parts.push(format!("{leaf}={}", short(v)));
                }
                let label = if parts.is_empty() { "base".to_owned() } else { parts.join(",") };
                let ctx = if vname.is_empty() { String::new() } else { format!(" (variant `{vname}`)") };
                let mut p: PointSpec = toml::Value::Table(t)
                    .try_into()
                    .map_err(|e: toml::de::Error| Error::parse(origin, 0, format!("{}{ctx}", e.message())))?;
                p.label = label;
                p.sim
                    .validate()
                    .map_err(|e| Error::parse(origin, 0, format!("point `{}`: {e}", p.label)))?;
                points.push(p);
            }
        }
        Ok(ExperimentSpec {
            name,
            seeds: seeds as u32,
            first_seed,
            workers,
            out,
            base_dir,
            points,
        })
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|k| self.first_seed + k).collect()
    }
}

fn key_line(text: &str, key: &str) -> u64 {
    let needle_bare = format!("{key} ");
    let needle_eq = format!("{key}=");
    let needle_quoted = format!("\"{key}\"");
    let needle_table = format!("[{key}");
    let needle_tables = format!("[[{key}");
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.starts_with(&needle_bare)
                || l.starts_with(&needle_eq)
                || l.starts_with(&needle_quoted)
                || l.starts_with(&needle_table)
                || l.starts_with(&needle_tables)
        })
        .map_or(0, |i| i as u64 + 1)
}

fn toml_error(origin: &Path, text: &str, e: &toml::de::Error) -> Error {
    let line = e
        .span()
        .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1);
    Error::parse(origin, line, e.message().to_owned())
}

/// Groups runs by mobility spec so traces are generated once per seed.
pub(crate) fn mobility_key(m: &MobilitySpec) -> String {
    toml::to_string(m).unwrap_or_default()
}
