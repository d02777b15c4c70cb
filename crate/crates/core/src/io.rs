//! File formats: environments, roadmaps, datasets, models, plan results and
//! benchmark tables.
//!
//! Structured data is JSON (datasets are JSON lines); benchmark output is CSV.
//! Writers are deterministic, so equal inputs give byte-identical files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{BenchRecord, CurvePoint};
use crate::centrality::{Dataset, Provenance, TrainingSample};
use crate::cprm::PlanResult;
use crate::env::{Aabb, EnvError, Environment, LocalPatch, Raster, State};
use crate::learner::{LearnError, MlpModel};
use crate::roadmap::{Roadmap, RoadmapError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Roadmap(#[from] RoadmapError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs {
        path: path.display().to_string(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> IoError + '_ {
    move |source| IoError::Json {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(fs_err(path))?);
    serde_json::to_writer_pretty(&mut w, value).map_err(json_err(path))?;
    w.write_all(b"\n").map_err(fs_err(path))?;
    w.flush().map_err(fs_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let mut s = String::new();
    File::open(path)
        .map_err(fs_err(path))?
        .read_to_string(&mut s)
        .map_err(fs_err(path))?;
    serde_json::from_str(&s).map_err(json_err(path))
}

/// Serializes non-finite floats as `null` and reads `null` back as `+∞`.
pub mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Run-length encoding of a bit string as `bit:count` pairs, e.g. `0:523,1:12`.
pub fn encode_rle(bits: &[u8]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < bits.len() {
        let b = bits[i];
        let mut j = i;
        while j < bits.len() && bits[j] == b {
            j += 1;
        }
        if !out.is_empty() {
            out.push(',');
        }
        out.push_str(&format!("{b}:{}", j - i));
        i = j;
    }
    out
}

pub fn decode_rle(s: &str) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    if s.is_empty() {
        return Ok(out);
    }
    for run in s.split(',') {
        let (bit, count) = run
            .split_once(':')
            .ok_or_else(|| format!("run {run:?} is not bit:count"))?;
        let bit: u8 = match bit {
            "0" => 0,
            "1" => 1,
            _ => return Err(format!("run {run:?} has a non-binary value")),
        };
        let count: usize = count.parse().map_err(|_| format!("run {run:?} has a bad count"))?;
        out.extend(std::iter::repeat_n(bit, count));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct EnvFile {
    dim: usize,
    seed: u64,
    obstacles: Vec<Aabb>,
    raster_shape: Vec<usize>,
    raster: String,
}

pub fn env_to_json(env: &Environment) -> String {
    let file = EnvFile {
        dim: env.dim(),
        seed: env.seed(),
        obstacles: env.obstacles().to_vec(),
        raster_shape: env.raster().shape(),
        raster: encode_rle(env.raster().cells()),
    };
    serde_json::to_string_pretty(&file).expect("environment serializes") + "\n"
}

/// Parses an environment file; the stored raster must match the boxes.
pub fn env_from_json(s: &str) -> Result<Environment, IoError> {
    let path = Path::new("<env>");
    let file: EnvFile = serde_json::from_str(s).map_err(json_err(path))?;
    let cells = decode_rle(&file.raster).map_err(|m| format_err(path, m))?;
    let raster = Raster::from_cells(file.dim, cells)?;
    if raster.shape() != file.raster_shape {
        return Err(format_err(
            path,
            format!("raster_shape {:?} does not match {:?}", file.raster_shape, raster.shape()),
        ));
    }
    Ok(Environment::with_raster(file.dim, file.obstacles, file.seed, raster)?)
}

pub fn save_env(env: &Environment, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, env_to_json(env)).map_err(fs_err(path))
}

pub fn load_env(path: &Path) -> Result<Environment, IoError> {
    let s = std::fs::read_to_string(path).map_err(fs_err(path))?;
    env_from_json(&s).map_err(|e| match e {
        IoError::Json { source, .. } => IoError::Json {
            path: path.display().to_string(),
            source,
        },
        IoError::Format { msg, .. } => format_err(path, msg),
        other => other,
    })
}

#[derive(Serialize, Deserialize)]
struct RoadmapFile {
    env_ref: String,
    nodes: Vec<State>,
    edges: Vec<(usize, usize, f64)>,
    flags: Vec<u8>,
}

/// Writes a roadmap; `env_ref` names the environment it was built in.
pub fn save_roadmap(rm: &Roadmap, env_ref: &str, path: &Path) -> Result<(), IoError> {
    let file = RoadmapFile {
        env_ref: env_ref.to_string(),
        nodes: rm.nodes().to_vec(),
        edges: rm.edges().collect(),
        flags: rm.critical_flags().iter().map(|&c| u8::from(c)).collect(),
    };
    write_json(path, &file)
}

/// Reads a roadmap and its `env_ref`. Edge costs are recomputed from the node
/// coordinates and must agree with the stored ones.
pub fn load_roadmap(path: &Path) -> Result<(Roadmap, String), IoError> {
    let file: RoadmapFile = read_json(path)?;
    if file.flags.len() != file.nodes.len() {
        return Err(format_err(path, "flags and nodes differ in length"));
    }
    let dim = file.nodes.first().map_or(2, |x| x.dim());
    let mut rm = Roadmap::new(dim);
    for (x, &f) in file.nodes.iter().zip(&file.flags) {
        if x.dim() != dim {
            return Err(format_err(path, "nodes of mixed dimension"));
        }
        if f > 1 {
            return Err(format_err(path, format!("flag {f} is not 0 or 1")));
        }
        rm.add_node(*x, f == 1);
    }
    for &(i, j, cost) in &file.edges {
        rm.check_index(i)?;
        rm.check_index(j)?;
        if i == j || !rm.add_edge(i, j) {
            return Err(format_err(path, format!("edge ({i}, {j}) is a loop or duplicate")));
        }
        let actual = rm.edge_cost(i, j).unwrap();
        if (actual - cost).abs() > 1e-12 * actual.max(1.0) {
            return Err(format_err(
                path,
                format!("edge ({i}, {j}) stores cost {cost}, endpoints are {actual} apart"),
            ));
        }
    }
    Ok((rm, file.env_ref))
}

#[derive(Serialize, Deserialize)]
struct DatasetRow {
    patch: LocalPatch,
    label: f64,
    env_seed: u64,
    node_index: usize,
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(fs_err(path))?);
    for (s, p) in ds.samples.iter().zip(&ds.provenance) {
        let row = DatasetRow {
            patch: s.patch.clone(),
            label: s.criticality,
            env_seed: p.env_seed,
            node_index: p.node_index,
        };
        serde_json::to_writer(&mut w, &row).map_err(json_err(path))?;
        w.write_all(b"\n").map_err(fs_err(path))?;
    }
    w.flush().map_err(fs_err(path))
}

pub fn load_dataset(path: &Path) -> Result<Dataset, IoError> {
    let r = BufReader::new(File::open(path).map_err(fs_err(path))?);
    let mut ds = Dataset::default();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(fs_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: DatasetRow = serde_json::from_str(&line).map_err(json_err(path))?;
        if !(row.label >= 0.0 && row.label.is_finite()) {
            return Err(format_err(path, format!("line {}: label {} is not a finite nonnegative number", lineno + 1, row.label)));
        }
        let patch = LocalPatch::from_values(row.patch.values().to_vec())?;
        ds.samples.push(TrainingSample {
            patch,
            criticality: row.label,
        });
        ds.provenance.push(Provenance {
            env_seed: row.env_seed,
            node_index: row.node_index,
        });
    }
    if let Some(len) = ds.input_len() {
        if ds.samples.iter().any(|s| s.patch.len() != len) {
            return Err(format_err(path, "patches of different lengths"));
        }
    }
    Ok(ds)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    epsilon: f64,
    activation: String,
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<(), IoError> {
    let file = ModelFile {
        layer_sizes: model.layer_sizes().to_vec(),
        weights: model.weights().to_vec(),
        biases: model.biases().to_vec(),
        epsilon: model.epsilon(),
        activation: "relu".into(),
    };
    write_json(path, &file)
}

pub fn load_model(path: &Path) -> Result<MlpModel, IoError> {
    let file: ModelFile = read_json(path)?;
    if file.activation != "relu" {
        return Err(format_err(path, format!("unsupported activation {:?}", file.activation)));
    }
    Ok(MlpModel::from_parts(file.layer_sizes, file.weights, file.biases, file.epsilon)?)
}

pub fn save_plan_result(result: &PlanResult, path: &Path) -> Result<(), IoError> {
    write_json(path, result)
}

pub fn load_plan_result(path: &Path) -> Result<PlanResult, IoError> {
    read_json(path)
}

fn fmt_cost(c: f64) -> String {
    if c.is_finite() {
        c.to_string()
    } else {
        "inf".into()
    }
}

pub const RECORDS_HEADER: [&str; 8] = [
    "method",
    "env_seed",
    "problem_id",
    "n",
    "build_time_s",
    "query_time_s",
    "success",
    "cost",
];

pub const CURVES_HEADER: [&str; 5] = ["method", "n", "mean_time_s", "success_rate", "mean_cost"];

pub fn write_records<W: Write>(records: &[BenchRecord], w: W) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RECORDS_HEADER)?;
    for r in records {
        out.write_record([
            r.method.as_str().to_string(),
            r.env_seed.to_string(),
            r.problem_id.to_string(),
            r.n.to_string(),
            r.build_time_s.to_string(),
            r.query_time_s.to_string(),
            u8::from(r.success).to_string(),
            fmt_cost(r.cost),
        ])?;
    }
    out.flush().map_err(|e| IoError::Csv(e.into()))
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<BenchRecord>, IoError> {
    let mut rdr = csv::Reader::from_reader(r);
    let path = Path::new("<records>");
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(RECORDS_HEADER) {
        return Err(format_err(path, format!("unexpected header {headers:?}")));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let bad = |field: &str| format_err(path, format!("bad {field} in {row:?}"));
        let cost = match &row[7] {
            "inf" => f64::INFINITY,
            c => c.parse().map_err(|_| bad("cost"))?,
        };
        out.push(BenchRecord {
            method: row[0].parse().map_err(|_| bad("method"))?,
            env_seed: row[1].parse().map_err(|_| bad("env_seed"))?,
            problem_id: row[2].parse().map_err(|_| bad("problem_id"))?,
            n: row[3].parse().map_err(|_| bad("n"))?,
            build_time_s: row[4].parse().map_err(|_| bad("build_time_s"))?,
            query_time_s: row[5].parse().map_err(|_| bad("query_time_s"))?,
            success: match &row[6] {
                "1" => true,
                "0" => false,
                _ => return Err(bad("success")),
            },
            cost,
            problems_in_build: 1,
        });
    }
    Ok(out)
}

/// Curves CSV; `mean_cost` is left empty where nothing succeeded.
pub fn write_curves<W: Write>(curves: &[CurvePoint], w: W) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CURVES_HEADER)?;
    for c in curves {
        out.write_record([
            c.method.as_str().to_string(),
            c.n.to_string(),
            c.mean_time_s.to_string(),
            c.success_rate.to_string(),
            c.mean_cost.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(|e| IoError::Csv(e.into()))
}

pub fn save_records(records: &[BenchRecord], path: &Path) -> Result<(), IoError> {
    write_records(records, File::create(path).map_err(fs_err(path))?)
}

pub fn save_curves(curves: &[CurvePoint], path: &Path) -> Result<(), IoError> {
    write_curves(curves, File::create(path).map_err(fs_err(path))?)
}
