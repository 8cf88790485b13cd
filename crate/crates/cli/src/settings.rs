//! Merges the config file, a replayed manifest and command-line flags into
//! a `RunConfig`. Precedence: flags, then the config file, then the
//! manifest, then built-in defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use themis_core::adapters::{AdapterKind, AdapterParams, LofParams, SpectralParams, TrimmedParams};
use themis_core::dataset_io::SeriesFormat;
use themis_core::pipeline::{
    load_manifest, parse_flat_config, parse_list, parse_top_k, EmbeddingSource, PipelineError, RunConfig, SweepGrid,
    DEFAULT_REF_CONTEXT, DEFAULT_REF_DIM,
};

use crate::RunArgs;

type Result<T> = std::result::Result<T, PipelineError>;

const KEYS: &[&str] = &[
    "series",
    "labels",
    "channel",
    "format",
    "embeddings",
    "ref-context",
    "ref-dim",
    "adapter",
    "k",
    "knn",
    "alpha",
    "topk",
    "window",
    "stride",
    "batch-windows",
    "normalize-scope",
    "spot-q",
    "spot-init",
    "calibration-file",
    "seed",
    "out",
    "jobs",
    "dump-wasm",
    "from-manifest",
];

/// Keys that take comma lists under `sweep`.
const GRID_KEYS: &[&str] = &["adapter", "batch-windows", "k", "knn", "alpha", "topk"];

fn config_err(msg: String) -> PipelineError {
    PipelineError::Config(msg)
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| config_err(format!("--{key}: cannot parse {raw:?}")))
}

fn parse_adapter(raw: &str) -> Result<AdapterKind> {
    match raw.trim() {
        "spectral" => Ok(AdapterKind::Spectral),
        "lof" => Ok(AdapterKind::Lof),
        "mean" => Ok(AdapterKind::Mean),
        "trimmed" | "trimmed_topk" | "trimmed-topk" => Ok(AdapterKind::TrimmedTopk),
        other => Err(config_err(format!(
            "--adapter: {other:?} is not one of spectral, lof, mean, trimmed"
        ))),
    }
}

fn parse_format(raw: &str) -> Result<SeriesFormat> {
    match raw.trim() {
        "csv" => Ok(SeriesFormat::Csv),
        "nab" | "nab_csv" | "nab-csv" => Ok(SeriesFormat::NabCsv),
        other => Err(config_err(format!("--format: {other:?} is not one of csv, nab"))),
    }
}

/// Default output root: `$THEMIS_OUT_DIR`, else `themis-out`.
fn output_root() -> PathBuf {
    std::env::var_os("THEMIS_OUT_DIR")
        .filter(|v| !v.is_empty())
        .map_or_else(|| PathBuf::from("themis-out"), PathBuf::from)
}

#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
    manifest: Option<RunConfig>,
    command: &'static str,
}

impl Settings {
    pub fn load(args: &RunArgs, command: &'static str) -> Result<Self> {
        let mut values = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
                    path: path.clone(),
                    source,
                })?;
                parse_flat_config(&text)?
            }
            None => BTreeMap::new(),
        };
        if let Some(bad) = values.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(config_err(format!("unknown config key {bad:?}")));
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let flags = [
            ("series", path(&args.series)),
            ("labels", path(&args.labels)),
            ("channel", args.channel.clone()),
            ("format", args.format.clone()),
            ("embeddings", path(&args.embeddings)),
            ("ref-context", args.ref_context.clone()),
            ("ref-dim", args.ref_dim.clone()),
            ("adapter", args.adapter.clone()),
            ("k", args.k.clone()),
            ("knn", args.knn.clone()),
            ("alpha", args.alpha.clone()),
            ("topk", args.topk.clone()),
            ("window", args.window.clone()),
            ("stride", args.stride.clone()),
            ("batch-windows", args.batch_windows.clone()),
            ("normalize-scope", args.normalize_scope.clone()),
            ("spot-q", args.spot_q.clone()),
            ("spot-init", args.spot_init.clone()),
            ("calibration-file", path(&args.calibration_file)),
            ("seed", args.seed.clone()),
            ("out", path(&args.out)),
            ("jobs", args.jobs.clone()),
            ("dump-wasm", args.dump_wasm.clone()),
            ("from-manifest", path(&args.from_manifest)),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                values.insert(key.to_string(), v);
            }
        }
        let manifest = match values.get("from-manifest") {
            Some(p) => Some(load_manifest(p)?.config),
            None => None,
        };
        Ok(Self {
            values,
            manifest,
            command,
        })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key).map(|raw| parse_value(key, raw)).transpose()
    }

    fn list<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Option<Vec<T>>> {
        self.get(key).map(|raw| parse_list(raw, &parse)).transpose()
    }

    fn base(&self) -> Result<RunConfig> {
        match (&self.manifest, self.get("series")) {
            (Some(cfg), _) => Ok(cfg.clone()),
            (None, Some(series)) => {
                let mut cfg = RunConfig::new(series);
                cfg.out = output_root().join(self.command);
                Ok(cfg)
            }
            (None, None) => Err(config_err("--series is required".into())),
        }
    }

    fn adapter(&self, kind: AdapterKind, current: AdapterParams) -> Result<AdapterParams> {
        Ok(match kind {
            AdapterKind::Spectral => {
                let mut p = match current {
                    AdapterParams::Spectral(p) => p,
                    _ => SpectralParams::default(),
                };
                if let Some(k) = self.parsed("k")? {
                    p.k = k;
                }
                AdapterParams::Spectral(p)
            }
            AdapterKind::Lof => {
                let mut p = match current {
                    AdapterParams::Lof(p) => p,
                    _ => LofParams::default(),
                };
                if let Some(n) = self.parsed("knn")? {
                    p.neighbors = n;
                }
                AdapterParams::Lof(p)
            }
            AdapterKind::Mean => AdapterParams::Mean,
            AdapterKind::TrimmedTopk => {
                let mut p = match current {
                    AdapterParams::TrimmedTopk(p) => p,
                    _ => TrimmedParams::default(),
                };
                if let Some(a) = self.parsed("alpha")? {
                    p.alpha = a;
                }
                if let Some(t) = self.get("topk") {
                    p.top_k = parse_top_k(t.trim())?;
                }
                AdapterParams::TrimmedTopk(p)
            }
        })
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = self.base()?;
        if let Some(s) = self.get("series") {
            cfg.series = s.into();
        }
        if let Some(l) = self.get("labels") {
            cfg.labels = Some(l.into());
        }
        if let Some(c) = self.parsed("channel")? {
            cfg.channel = c;
        }
        if let Some(f) = self.get("format") {
            cfg.format = parse_format(f)?;
        }
        let ref_context: Option<usize> = self.parsed("ref-context")?;
        let ref_dim: Option<usize> = self.parsed("ref-dim")?;
        match (self.get("embeddings"), ref_context.or(ref_dim)) {
            (Some(_), Some(_)) => {
                return Err(config_err(
                    "--embeddings and --ref-context/--ref-dim are mutually exclusive".into(),
                ))
            }
            (Some(path), None) => cfg.embeddings = EmbeddingSource::File { path: path.into() },
            (None, Some(_)) => {
                let (c0, d0) = match cfg.embeddings {
                    EmbeddingSource::Reference { context, dim } => (context, dim),
                    EmbeddingSource::File { .. } => (DEFAULT_REF_CONTEXT, DEFAULT_REF_DIM),
                };
                cfg.embeddings = EmbeddingSource::Reference {
                    context: ref_context.unwrap_or(c0),
                    dim: ref_dim.unwrap_or(d0),
                };
            }
            (None, None) => {}
        }
        let kind = match self.get("adapter") {
            Some(a) => parse_adapter(a)?,
            None => cfg.adapter.kind(),
        };
        cfg.adapter = self.adapter(kind, cfg.adapter)?;
        if let Some(w) = self.parsed("window")? {
            cfg.window = w;
        }
        if let Some(s) = self.parsed("stride")? {
            cfg.stride = Some(s);
        }
        if let Some(b) = self.parsed("batch-windows")? {
            cfg.batch_windows = b;
        }
        if let Some(s) = self.get("normalize-scope") {
            cfg.normalize_scope = s.trim().parse()?;
        }
        if let Some(q) = self.parsed("spot-q")? {
            cfg.spot_q = q;
        }
        if let Some(i) = self.parsed("spot-init")? {
            cfg.spot_init = i;
        }
        if let Some(c) = self.get("calibration-file") {
            cfg.calibration_file = Some(c.into());
        }
        if let Some(s) = self.parsed("seed")? {
            cfg.seed = s;
        }
        if let Some(j) = self.parsed("jobs")? {
            cfg.jobs = j;
        }
        if let Some(o) = self.get("out") {
            cfg.out = o.into();
        }
        if let Some(d) = self.get("dump-wasm") {
            cfg.dump_wasm = if d.trim() == "none" {
                Vec::new()
            } else {
                parse_list(d, |t| parse_value("dump-wasm", t))?
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The base config plus the grid; list-valued keys become grid axes.
    pub fn sweep_config(&self) -> Result<(RunConfig, SweepGrid)> {
        let mut singles = self.clone();
        singles.values.retain(|k, _| !GRID_KEYS.contains(&k.as_str()));
        let cfg = singles.run_config()?;
        let mut grid = SweepGrid::from_config(&cfg);
        if let Some(a) = self.list("adapter", parse_adapter)? {
            grid.adapters = a;
            // an adapter switch without its own list falls back to defaults
            if !grid.adapters.contains(&cfg.adapter.kind()) {
                grid = SweepGrid {
                    adapters: grid.adapters,
                    ..SweepGrid::from_config(&RunConfig {
                        adapter: AdapterParams::Mean,
                        ..cfg.clone()
                    })
                };
            }
        }
        let num = |key: &'static str| move |t: &str| parse_value::<usize>(key, t);
        if let Some(b) = self.list("batch-windows", num("batch-windows"))? {
            grid.batch_windows = b;
        }
        if let Some(k) = self.list("k", num("k"))? {
            grid.k = k;
        }
        if let Some(n) = self.list("knn", num("knn"))? {
            grid.knn = n;
        }
        if let Some(a) = self.list("alpha", |t| parse_value::<f64>("alpha", t))? {
            grid.alpha = a;
        }
        if let Some(t) = self.list("topk", parse_top_k)? {
            grid.top_k = t;
        }
        Ok((cfg, grid))
    }

    /// Config and output file for `embed-ref`.
    pub fn embed_config(&self) -> Result<(RunConfig, PathBuf)> {
        if self.get("embeddings").is_some() {
            return Err(config_err("embed-ref writes reference embeddings; drop --embeddings".into()));
        }
        let mut cfg = self.run_config()?;
        if let EmbeddingSource::File { .. } = cfg.embeddings {
            cfg.embeddings = EmbeddingSource::Reference {
                context: DEFAULT_REF_CONTEXT,
                dim: DEFAULT_REF_DIM,
            };
        }
        let path = match self.get("out") {
            Some(o) => PathBuf::from(o),
            None => output_root().join(self.command).join("embeddings.them"),
        };
        Ok((cfg, path))
    }
}
