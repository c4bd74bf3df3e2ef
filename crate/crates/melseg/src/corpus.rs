//! Melody corpus parsing, validation and serialization.
//!
//! Melodies are quantized note streams on a sixteenth-note tick grid with
//! phrase-start annotations. The on-disk format is a minimal CSV document
//! with the exact header `onset_16th,duration_16th,midi_pitch,phrase_start`,
//! LF line endings, decimal integers and no quoting; parsing and
//! serialization round-trip bit-identically for every valid file.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Exact CSV header required for melody files.
pub const MELODY_CSV_HEADER: &str = "onset_16th,duration_16th,midi_pitch,phrase_start";

/// A single quantized note. One tick is one sixteenth note.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoteEvent {
    /// Onset in ticks from the start of the melody.
    pub onset: u32,
    /// Duration in ticks, at least 1.
    pub duration: u32,
    /// MIDI pitch in `[0, 127]`.
    pub pitch: u8,
    /// True if this note begins a phrase.
    pub phrase_start: bool,
}

impl NoteEvent {
    /// Tick at which the note ends (`onset + duration`).
    pub fn offset(&self) -> u32 {
        self.onset + self.duration
    }
}

/// A validated monophonic melody: nonempty, strictly increasing onsets,
/// no overlapping notes, first note flagged as a phrase start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Melody {
    pub id: String,
    pub notes: Vec<NoteEvent>,
}

/// A set of melodies with unique ids, in deterministic order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub melodies: Vec<Melody>,
    /// Manifest file or directory the corpus was loaded from, when any.
    pub source: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{file}: malformed header: expected `{MELODY_CSV_HEADER}`, got `{got}`")]
    MalformedHeader { file: String, got: String },
    #[error("{file}:{line}: non-integer field `{field}`")]
    NonIntegerField {
        file: String,
        line: usize,
        field: String,
    },
    #[error("{file}:{line}: field `{field}` out of range: {value}")]
    FieldOutOfRange {
        file: String,
        line: usize,
        field: String,
        value: i64,
    },
    #[error("{file}:{line}: expected 4 fields, got {got}")]
    WrongFieldCount {
        file: String,
        line: usize,
        got: usize,
    },
    #[error("{file}:{line}: onset {onset} does not increase over previous onset {prev}")]
    NonMonotoneOnset {
        file: String,
        line: usize,
        onset: u32,
        prev: u32,
    },
    #[error("{file}:{line}: note at onset {onset} overlaps previous note ending at {prev_end}")]
    OverlappingNotes {
        file: String,
        line: usize,
        onset: u32,
        prev_end: u32,
    },
    #[error("{file}: melody has no notes")]
    EmptyMelody { file: String },
    #[error("{file}: first note must have phrase_start = 1")]
    FirstNoteNotPhraseStart { file: String },
    #[error("duplicate melody id `{id}`")]
    DuplicateId { id: String },
    #[error("corpus at {path} contains no melodies")]
    EmptyCorpus { path: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Melody {
    /// Validate the melody invariants, returning the melody on success.
    pub fn new(id: impl Into<String>, notes: Vec<NoteEvent>) -> Result<Self, CorpusError> {
        let id = id.into();
        validate_notes(&id, &notes, None)?;
        Ok(Melody { id, notes })
    }
}

fn validate_notes(
    id: &str,
    notes: &[NoteEvent],
    // CSV line numbers per note, when parsed from a file.
    lines: Option<&[usize]>,
) -> Result<(), CorpusError> {
    let line_of = |i: usize| lines.map_or(i + 2, |l| l[i]);
    if notes.is_empty() {
        return Err(CorpusError::EmptyMelody { file: id.into() });
    }
    if !notes[0].phrase_start {
        return Err(CorpusError::FirstNoteNotPhraseStart { file: id.into() });
    }
    for (i, pair) in notes.windows(2).enumerate() {
        let (prev, cur) = (pair[0], pair[1]);
        if cur.onset <= prev.onset {
            return Err(CorpusError::NonMonotoneOnset {
                file: id.into(),
                line: line_of(i + 1),
                onset: cur.onset,
                prev: prev.onset,
            });
        }
        if cur.onset < prev.offset() {
            return Err(CorpusError::OverlappingNotes {
                file: id.into(),
                line: line_of(i + 1),
                onset: cur.onset,
                prev_end: prev.offset(),
            });
        }
    }
    Ok(())
}

/// Parse a melody CSV document.
///
/// The document must carry the exact header [`MELODY_CSV_HEADER`]; every
/// row holds four decimal integers with `phrase_start` in `{0, 1}`. All
/// melody invariants are enforced.
pub fn parse_melody(text: &str, id: &str) -> Result<Melody, CorpusError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != MELODY_CSV_HEADER {
        return Err(CorpusError::MalformedHeader {
            file: id.into(),
            got: header.into(),
        });
    }
    let mut notes = Vec::new();
    let mut line_nos = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line_no = ln + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CorpusError::WrongFieldCount {
                file: id.into(),
                line: line_no,
                got: fields.len(),
            });
        }
        let parse_int = |s: &str| -> Result<i64, CorpusError> {
            s.parse::<i64>().map_err(|_| CorpusError::NonIntegerField {
                file: id.into(),
                line: line_no,
                field: s.into(),
            })
        };
        let range = |name: &str, v: i64, lo: i64, hi: i64| -> Result<i64, CorpusError> {
            if v < lo || v > hi {
                Err(CorpusError::FieldOutOfRange {
                    file: id.into(),
                    line: line_no,
                    field: name.into(),
                    value: v,
                })
            } else {
                Ok(v)
            }
        };
        let onset = range("onset_16th", parse_int(fields[0])?, 0, u32::MAX as i64)?;
        let duration = range("duration_16th", parse_int(fields[1])?, 1, u32::MAX as i64)?;
        let pitch = range("midi_pitch", parse_int(fields[2])?, 0, 127)?;
        let phrase_start = range("phrase_start", parse_int(fields[3])?, 0, 1)?;
        notes.push(NoteEvent {
            onset: onset as u32,
            duration: duration as u32,
            pitch: pitch as u8,
            phrase_start: phrase_start == 1,
        });
        line_nos.push(line_no);
    }
    validate_notes(id, &notes, Some(&line_nos))?;
    Ok(Melody {
        id: id.into(),
        notes,
    })
}

/// Serialize a melody to the bit-exact CSV format parsed by
/// [`parse_melody`]: LF line endings, no quoting, no trailing whitespace.
pub fn serialize_melody(m: &Melody) -> String {
    let mut out = String::with_capacity(m.notes.len() * 16 + 48);
    out.push_str(MELODY_CSV_HEADER);
    out.push('\n');
    for n in &m.notes {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            n.onset,
            n.duration,
            n.pitch,
            u8::from(n.phrase_start)
        );
    }
    out
}

/// Load a corpus from a manifest file or a directory.
///
/// A manifest lists one melody CSV path per line, relative to the manifest's
/// directory; `#` starts a comment line. A directory loads all `*.csv` files
/// sorted lexicographically by filename. Melody ids are the file stems.
pub fn load_corpus(manifest: &Path) -> Result<Corpus, CorpusError> {
    let io_err = |p: &Path, e: std::io::Error| CorpusError::Io {
        path: p.display().to_string(),
        source: e,
    };
    let files: Vec<PathBuf> = if manifest.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(manifest)
            .map_err(|e| io_err(manifest, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        entries.sort_by_key(|p| p.file_name().map(|s| s.to_os_string()));
        entries
    } else {
        let text = std::fs::read_to_string(manifest).map_err(|e| io_err(manifest, e))?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| base.join(l))
            .collect()
    };
    if files.is_empty() {
        return Err(CorpusError::EmptyCorpus {
            path: manifest.display().to_string(),
        });
    }
    let mut melodies = Vec::with_capacity(files.len());
    let mut seen = BTreeSet::new();
    for file in &files {
        let id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId { id });
        }
        let text = std::fs::read_to_string(file).map_err(|e| io_err(file, e))?;
        melodies.push(parse_melody(&text, &id)?);
    }
    Ok(Corpus {
        melodies,
        source: Some(manifest.to_path_buf()),
    })
}

/// Ground-truth boundary vector for a melody, one element per note.
///
/// Element `i` is 1 iff note `i` starts a phrase, except that note 0 is
/// never counted (every melody trivially opens a phrase) and the final
/// element is forced to 1. The same implicit final boundary is applied to
/// predictions, so evaluation counts it on both sides.
pub fn boundary_vector(m: &Melody) -> Vec<u8> {
    let mut v: Vec<u8> = m.notes.iter().map(|n| u8::from(n.phrase_start)).collect();
    v[0] = 0;
    *v.last_mut().expect("melody is nonempty") = 1;
    v
}

/// Fraction of notes carrying a phrase-start annotation, over all
/// melodies of the corpus. Reported as a diagnostic; no masking or final
/// forcing is applied.
pub fn boundary_density(corpus: &Corpus) -> f64 {
    let mut marked = 0usize;
    let mut total = 0usize;
    for m in &corpus.melodies {
        total += m.notes.len();
        marked += m.notes.iter().filter(|n| n.phrase_start).count();
    }
    if total == 0 {
        0.0
    } else {
        marked as f64 / total as f64
    }
}
