//! On-disk corpus layout.
//!
//! ```text
//! root/corpus.csv              clip,scene,label,frames
//! root/<clip>/scenario.json
//! root/<clip>/labels.csv       frame,label
//! root/<clip>/frames/*.pgm
//! root/<clip>/truth_tracklets.jsonl
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{export_tracklets, render, simulate, ScenarioSpec};
use crate::error::{Error, Result};
use crate::frame_io::{write_pgm, FrameFormat};
use crate::models::Label;
use crate::par::{self, Execution};
use crate::tracker::{write_tracklets, NoiseFilter};

/// A named scenario inside a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSpec {
    pub name: String,
    pub scene: String,
    pub spec: ScenarioSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub clip: String,
    pub scene: String,
    pub label: Label,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub root: PathBuf,
    pub entries: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn clip_dir(&self, e: &CorpusEntry) -> PathBuf {
        self.root.join(&e.clip)
    }

    pub fn scenes(&self) -> Vec<String> {
        let mut s: Vec<String> = Vec::new();
        for e in &self.entries {
            if !s.contains(&e.scene) {
                s.push(e.scene.clone());
            }
        }
        s
    }
}

pub const CORPUS_FILE: &str = "corpus.csv";
pub const FRAMES_DIR: &str = "frames";
pub const LABELS_FILE: &str = "labels.csv";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const TRUTH_TRACKLETS_FILE: &str = "truth_tracklets.jsonl";

fn io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// Simulate, render and write one clip into `dir`.
pub fn write_clip(
    dir: &Path,
    clip: &ClipSpec,
    header: &[String],
    filter: &NoiseFilter,
    window: usize,
) -> Result<CorpusEntry> {
    let sim = simulate(&clip.spec)?;
    let frames_dir = dir.join(FRAMES_DIR);
    fs::create_dir_all(&frames_dir).map_err(io(&frames_dir))?;

    let p = dir.join(SCENARIO_FILE);
    let text = serde_json::to_string_pretty(&clip.spec).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(&p, text + "\n").map_err(io(&p))?;

    write_labels(&dir.join(LABELS_FILE), header, &sim.labels)?;

    for f in render(&sim) {
        let f = f?;
        write_pgm(&f, &frames_dir.join(format!("{:06}.pgm", f.index)))?;
    }

    let p = dir.join(TRUTH_TRACKLETS_FILE);
    let (meta, tracklets) = export_tracklets(&sim, window, filter);
    let mut w = BufWriter::new(File::create(&p).map_err(io(&p))?);
    write_tracklets(&mut w, header, &meta, &tracklets)?;
    w.flush().map_err(io(&p))?;

    Ok(CorpusEntry {
        clip: clip.name.clone(),
        scene: clip.scene.clone(),
        label: clip.label(),
        frames: sim.frames(),
    })
}

/// Write every clip (in parallel under `exec`) plus the corpus index.
pub fn write_corpus(
    root: &Path,
    clips: &[ClipSpec],
    header: &[String],
    filter: &NoiseFilter,
    window: usize,
    exec: Execution,
) -> Result<Corpus> {
    fs::create_dir_all(root).map_err(io(root))?;
    let entries = par::map(exec, clips, |c| {
        write_clip(&root.join(&c.name), c, header, filter, window)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let p = root.join(CORPUS_FILE);
    let mut w = BufWriter::new(File::create(&p).map_err(io(&p))?);
    for h in header {
        writeln!(w, "# {h}").map_err(io(&p))?;
    }
    writeln!(w, "clip,scene,label,frames").map_err(io(&p))?;
    for e in &entries {
        writeln!(w, "{},{},{},{}", e.clip, e.scene, e.label, e.frames).map_err(io(&p))?;
    }
    w.flush().map_err(io(&p))?;
    Ok(Corpus {
        root: root.to_path_buf(),
        entries,
    })
}

fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let f = File::open(path).map_err(io(path))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(f)))
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

pub fn read_corpus(root: &Path) -> Result<Corpus> {
    let p = root.join(CORPUS_FILE);
    let mut r = csv_reader(&p)?;
    let entries = r
        .deserialize()
        .collect::<std::result::Result<Vec<CorpusEntry>, _>>()
        .map_err(|e| parse_err(&p, e))?;
    if entries.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} lists no clips",
            p.display()
        )));
    }
    Ok(Corpus {
        root: root.to_path_buf(),
        entries,
    })
}

pub fn write_labels(path: &Path, header: &[String], labels: &[Label]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io(path))?);
    for h in header {
        writeln!(w, "# {h}").map_err(io(path))?;
    }
    writeln!(w, "frame,label").map_err(io(path))?;
    for (i, l) in labels.iter().enumerate() {
        writeln!(w, "{i},{l}").map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

/// Per-frame labels indexed by frame number; frames must be 0..n in order.
pub fn read_labels(path: &Path) -> Result<Vec<Label>> {
    #[derive(Deserialize)]
    struct Row {
        frame: u64,
        label: String,
    }
    let mut r = csv_reader(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<Row>() {
        let row = row.map_err(|e| parse_err(path, e))?;
        if row.frame != out.len() as u64 {
            return Err(parse_err(
                path,
                format!("expected frame {}, found {}", out.len(), row.frame),
            ));
        }
        out.push(row.label.parse()?);
    }
    Ok(out)
}

/// Frame layout used by corpora.
pub const CORPUS_FRAME_FORMAT: FrameFormat = FrameFormat::PgmDir;
