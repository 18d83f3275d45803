use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use coulomb_core::io::{write_csv, write_json};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Common, Format};
use crate::Failure;

/// Collects named tables and writes them to `--out` or stdout.
///
/// With a directory, csv produces `stem.csv` plus `stem.meta.json`, json
/// produces `stem.json` holding `{meta, rows}`. On stdout, json prints one
/// object keyed by stem and csv prints the bare table.
pub struct Sink {
    format: Format,
    dir: Option<PathBuf>,
    pending: BTreeMap<String, Value>,
    csv: Option<Vec<u8>>,
}

impl Sink {
    /// `tables` is the number of tables the command will emit.
    pub fn new(common: &Common, tables: usize) -> Result<Self, Failure> {
        if common.format == Format::Csv && common.out.is_none() && tables > 1 {
            return Err(Failure::Usage(
                "several csv tables need --out DIR (or use --format json)".into(),
            ));
        }
        if let Some(dir) = &common.out {
            fs::create_dir_all(dir)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
        }
        Ok(Sink {
            format: common.format,
            dir: common.out.clone(),
            pending: BTreeMap::new(),
            csv: None,
        })
    }

    pub fn emit<M: Serialize, R: Serialize>(
        &mut self,
        stem: &str,
        meta: &M,
        rows: &[R],
    ) -> Result<(), Failure> {
        match (&self.dir, self.format) {
            (Some(dir), Format::Csv) => {
                write_file(dir.join(format!("{stem}.csv")), |w| write_csv(w, rows))?;
                write_file(dir.join(format!("{stem}.meta.json")), |w| {
                    write_json(w, meta)
                })?;
            }
            (Some(dir), Format::Json) => {
                let doc = json!({ "meta": meta, "rows": rows });
                write_file(dir.join(format!("{stem}.json")), |w| write_json(w, &doc))?;
            }
            (None, Format::Json) => {
                self.pending
                    .insert(stem.to_string(), json!({ "meta": meta, "rows": rows }));
            }
            (None, Format::Csv) => {
                let mut buf = Vec::new();
                write_csv(&mut buf, rows).map_err(runtime)?;
                self.csv = Some(buf);
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<(), Failure> {
        let mut out = io::stdout().lock();
        if !self.pending.is_empty() {
            write_json(&mut out, &self.pending).map_err(runtime)?;
        }
        if let Some(buf) = self.csv {
            out.write_all(&buf)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
        }
        out.flush().map_err(|e| Failure::Runtime(e.to_string()))
    }
}

fn write_file(
    path: PathBuf,
    body: impl FnOnce(&mut BufWriter<File>) -> coulomb_core::Result<()>,
) -> Result<(), Failure> {
    let file =
        File::create(&path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(runtime)?;
    w.flush()
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn runtime(e: coulomb_core::Error) -> Failure {
    Failure::Runtime(e.to_string())
}
