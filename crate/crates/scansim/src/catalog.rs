//! Synthetic library catalog: book records, section ranges, seeded
//! generation, candidate-set retrieval, and JSON Lines persistence.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::callnum::{parse_call_number, CallNumber, Cutter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    Zh,
    Ja,
    Ko,
    En,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    OnShelf,
    CheckedOut,
    Offsite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookRecord {
    pub book_id: String,
    pub title: String,
    pub call_number: CallNumber,
    pub language: Language,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub id: String,
    pub lo: CallNumber,
    pub hi: CallNumber,
}

/// Records sorted ascending by call number plus non-overlapping section
/// ranges that cover them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub records: Vec<BookRecord>,
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogConfig {
    pub num_books: usize,
    pub num_sections: usize,
    /// Fractions for (zh, ja, ko, en); must sum to 1.
    pub language_mix: [f64; 4],
    pub p_checked_out: f64,
    pub p_offsite: f64,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        CatalogConfig {
            num_books: 3000,
            num_sections: 25,
            language_mix: [0.5, 0.2, 0.1, 0.2],
            p_checked_out: 0.05,
            p_offsite: 0.03,
        }
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown section {0:?}")]
    UnknownSection(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed catalog line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

impl CatalogConfig {
    pub fn validate(&self) -> Result<(), CatalogError> {
        if self.num_books < 1 {
            return Err(CatalogError::InvalidConfig("num_books must be >= 1".into()));
        }
        if self.num_sections < 1 {
            return Err(CatalogError::InvalidConfig(
                "num_sections must be >= 1".into(),
            ));
        }
        let sum: f64 = self.language_mix.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.language_mix.iter().any(|p| *p < 0.0) {
            return Err(CatalogError::InvalidConfig(
                "language_mix must be nonnegative and sum to 1".into(),
            ));
        }
        for (name, p) in [
            ("p_checked_out", self.p_checked_out),
            ("p_offsite", self.p_offsite),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CatalogError::InvalidConfig(format!(
                    "{name} must be in [0,1]"
                )));
            }
        }
        if self.p_checked_out + self.p_offsite > 1.0 {
            return Err(CatalogError::InvalidConfig(
                "p_checked_out + p_offsite must be <= 1".into(),
            ));
        }
        Ok(())
    }
}

// Bundled title token pools. Composition is seeded, so titles are
// reproducible without external data.
const ZH_TOKENS: &[&str] = &[
    "中国", "历史", "文学", "研究", "哲学", "艺术", "社会", "经济", "思想", "文化",
    "古代", "现代", "诗歌", "小说", "考古", "政治", "宗教", "语言", "教育", "地理",
];
const JA_TOKENS: &[&str] = &[
    "日本", "歴史", "文学", "研究", "物語", "美術", "社会", "経済", "思想", "文化",
    "古典", "現代", "詩歌", "小説", "考古", "政治", "宗教", "言語", "教育", "地理",
];
const KO_TOKENS: &[&str] = &[
    "한국", "역사", "문학", "연구", "철학", "예술", "사회", "경제", "사상", "문화",
    "고전", "현대", "시가", "소설", "고고", "정치", "종교", "언어", "교육", "지리",
];
const EN_TOKENS: &[&str] = &[
    "History", "Studies", "Introduction", "Culture", "Society", "Essays", "Poetry",
    "Analysis", "Survey", "Atlas", "Readings", "Language", "Philosophy", "Art",
    "Economy", "Politics", "Religion", "Archive", "Regional", "Modern",
];
const CLASS_POOLS: &[&str] = &[
    "DS", "PL", "QA", "B", "HN", "ND", "BL", "GB", "Z", "PK",
];

fn sample_language(mix: &[f64; 4], rng: &mut ChaCha8Rng) -> Language {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in mix.iter().enumerate() {
        acc += p;
        if r < acc {
            return [Language::Zh, Language::Ja, Language::Ko, Language::En][i];
        }
    }
    Language::En
}

fn sample_title(language: Language, rng: &mut ChaCha8Rng) -> String {
    let (pool, sep): (&[&str], &str) = match language {
        Language::Zh => (ZH_TOKENS, ""),
        Language::Ja => (JA_TOKENS, ""),
        Language::Ko => (KO_TOKENS, " "),
        Language::En => (EN_TOKENS, " "),
    };
    let n = rng.random_range(2..=4);
    let tokens: Vec<&str> = (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect();
    tokens.join(sep)
}

/// Random structurally valid call number; cutter digit strings never end in
/// zero, so distinct strings stay distinct as decimal fractions.
pub fn sample_call_number(rng: &mut ChaCha8Rng) -> CallNumber {
    let class_letters = CLASS_POOLS[rng.random_range(0..CLASS_POOLS.len())].to_string();
    let class_int = rng.random_range(1..=9999);
    let class_frac = if rng.random_bool(0.2) {
        let mut s = format!("{}", rng.random_range(1..=99));
        while s.ends_with('0') {
            s.pop();
        }
        s
    } else {
        String::new()
    };
    let n_cutters = rng.random_range(1..=2);
    let cutters = (0..n_cutters)
        .map(|_| {
            let letter = (b'A' + rng.random_range(0..26u8)) as char;
            let ndig = rng.random_range(1..=3);
            let digits: String = (0..ndig)
                .map(|i| {
                    // avoid trailing zero so distinct digit strings stay
                    // distinct as decimal fractions
                    let lo = if i == ndig - 1 { 1 } else { 0 };
                    char::from(b'0' + rng.random_range(lo..=9u8))
                })
                .collect();
            Cutter { letter, digits }
        })
        .collect();
    let year = if rng.random_bool(0.5) {
        Some(rng.random_range(1850..=2025) as u16)
    } else {
        None
    };
    CallNumber {
        class_letters,
        class_int,
        class_frac,
        cutters,
        year,
    }
}

/// Deterministic catalog generation for (cfg, seed).
pub fn generate_catalog(cfg: &CatalogConfig, seed: u64) -> Result<Catalog, CatalogError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xCA7A_1060);

    // distinct call numbers, then sorted
    let mut numbers: BTreeSet<CallNumber> = BTreeSet::new();
    let mut guard = 0usize;
    while numbers.len() < cfg.num_books {
        numbers.insert(sample_call_number(&mut rng));
        guard += 1;
        if guard > cfg.num_books * 100 {
            return Err(CatalogError::InvalidConfig(
                "could not sample enough distinct call numbers".into(),
            ));
        }
    }

    let records: Vec<BookRecord> = numbers
        .into_iter()
        .enumerate()
        .map(|(i, call_number)| {
            let language = sample_language(&cfg.language_mix, &mut rng);
            let title = sample_title(language, &mut rng);
            let r: f64 = rng.random();
            let status = if r < cfg.p_checked_out {
                Status::CheckedOut
            } else if r < cfg.p_checked_out + cfg.p_offsite {
                Status::Offsite
            } else {
                Status::OnShelf
            };
            BookRecord {
                book_id: format!("B{i:06}"),
                title,
                call_number,
                language,
                status,
            }
        })
        .collect();

    // near-equal contiguous chunks; lo/hi are the chunk's end call numbers
    let mut sections = Vec::with_capacity(cfg.num_sections);
    let n = records.len();
    let k = cfg.num_sections.min(n);
    for s in 0..k {
        let lo_idx = s * n / k;
        let hi_idx = (s + 1) * n / k - 1;
        sections.push(Section {
            id: format!("S{s:03}"),
            lo: records[lo_idx].call_number.clone(),
            hi: records[hi_idx].call_number.clone(),
        });
    }

    Ok(Catalog { records, sections })
}

impl Catalog {
    /// All records whose call number lies in the section range, in catalog
    /// order, regardless of availability status.
    pub fn candidate_set(&self, section_id: &str) -> Result<&[BookRecord], CatalogError> {
        let section = self
            .sections
            .iter()
            .find(|s| s.id == section_id)
            .ok_or_else(|| CatalogError::UnknownSection(section_id.to_string()))?;
        let lo = self
            .records
            .partition_point(|r| r.call_number.cmp(&section.lo) == Ordering::Less);
        let hi = self
            .records
            .partition_point(|r| r.call_number.cmp(&section.hi) != Ordering::Greater);
        Ok(&self.records[lo..hi])
    }

    /// Section containing the given call number, if any.
    pub fn section_of(&self, cn: &CallNumber) -> Option<&Section> {
        self.sections
            .iter()
            .find(|s| cn >= &s.lo && cn <= &s.hi)
    }

    pub fn lookup(&self, book_id: &str) -> Option<&BookRecord> {
        self.records.iter().find(|r| r.book_id == book_id)
    }

    /// JSON Lines: header line with the section table, one record per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), CatalogError> {
        #[derive(Serialize)]
        struct Header<'a> {
            sections: Vec<SectionLine<'a>>,
        }
        let header = Header {
            sections: self
                .sections
                .iter()
                .map(|s| SectionLine {
                    id: &s.id,
                    lo: s.lo.to_string(),
                    hi: s.hi.to_string(),
                })
                .collect(),
        };
        writeln!(w, "{}", serde_json::to_string(&header).unwrap())?;
        for r in &self.records {
            let line = RecordLine {
                book_id: &r.book_id,
                title: &r.title,
                call_number: r.call_number.to_string(),
                language: r.language,
                status: r.status,
            };
            writeln!(w, "{}", serde_json::to_string(&line).unwrap())?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Catalog, CatalogError> {
        #[derive(Deserialize)]
        struct Header {
            sections: Vec<SectionLineOwned>,
        }
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or(CatalogError::Malformed {
                line: 1,
                reason: "missing header line".into(),
            })??;
        let header: Header =
            serde_json::from_str(&header_line).map_err(|e| CatalogError::Malformed {
                line: 1,
                reason: e.to_string(),
            })?;
        let mut sections = Vec::new();
        for s in header.sections {
            sections.push(Section {
                id: s.id,
                lo: parse_call_number(&s.lo).map_err(|e| CatalogError::Malformed {
                    line: 1,
                    reason: e.to_string(),
                })?,
                hi: parse_call_number(&s.hi).map_err(|e| CatalogError::Malformed {
                    line: 1,
                    reason: e.to_string(),
                })?,
            });
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordLineOwned =
                serde_json::from_str(&line).map_err(|e| CatalogError::Malformed {
                    line: i + 2,
                    reason: e.to_string(),
                })?;
            records.push(BookRecord {
                book_id: rec.book_id,
                title: rec.title,
                call_number: parse_call_number(&rec.call_number).map_err(|e| {
                    CatalogError::Malformed {
                        line: i + 2,
                        reason: e.to_string(),
                    }
                })?,
                language: rec.language,
                status: rec.status,
            });
        }
        Ok(Catalog { records, sections })
    }
}

#[derive(Serialize)]
struct SectionLine<'a> {
    id: &'a str,
    lo: String,
    hi: String,
}

#[derive(Deserialize)]
struct SectionLineOwned {
    id: String,
    lo: String,
    hi: String,
}

#[derive(Serialize)]
struct RecordLine<'a> {
    book_id: &'a str,
    title: &'a str,
    call_number: String,
    language: Language,
    status: Status,
}

#[derive(Deserialize)]
struct RecordLineOwned {
    book_id: String,
    title: String,
    call_number: String,
    language: Language,
    status: Status,
}
