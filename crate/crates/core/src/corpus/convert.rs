//! Converters from the published annotation formats into canonical examples.
//!
//! | format        | group | line shape                                                    |
//! |---------------|-------|---------------------------------------------------------------|
//! | `bartabsa`    | D17   | JSON objects with `words`, `aspects`, `opinions`               |
//! | `towe`        | D19   | TSV `s_id, sentence, target_tags, opinion_words_tags`          |
//! | `aste-v2`     | D20   | `sentence####[([a..], [o..], 'POS'), ...]` (token indices)     |
//! | `asqp`        | D21   | `sentence####[['a', 'c', 'sentiment', 'o'], ...]`              |

use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::Deserialize;

use super::{CorpusError, Element, Example, Polarity, SentimentTuple, Subtask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Canonical,
    BartAbsa,
    Towe,
    AsteV2,
    Asqp,
}

impl FromStr for SourceFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "canonical" | "jsonl" => Ok(SourceFormat::Canonical),
            "bartabsa" | "d17" => Ok(SourceFormat::BartAbsa),
            "towe" | "d19" => Ok(SourceFormat::Towe),
            "aste-v2" | "astev2" | "d20" => Ok(SourceFormat::AsteV2),
            "asqp" | "d21" => Ok(SourceFormat::Asqp),
            other => Err(CorpusError::UnknownDataset(format!("source format {other}"))),
        }
    }
}

impl SourceFormat {
    pub fn serves(self) -> &'static [Subtask] {
        match self {
            SourceFormat::Canonical => &Subtask::ALL,
            SourceFormat::BartAbsa => &[Subtask::Ae, Subtask::Oe, Subtask::Alsc],
            SourceFormat::Towe => &[Subtask::Aoe],
            SourceFormat::AsteV2 => &[Subtask::Aesc, Subtask::Aope, Subtask::Aste],
            SourceFormat::Asqp => &[Subtask::Asqp],
        }
    }
}

/// Reads a source file and produces canonical examples for `subtask`.
/// Ids are `<id_prefix>-<n>` with `n` counting sentences from 1.
pub fn convert_file(
    path: &Path,
    format: SourceFormat,
    subtask: Subtask,
    id_prefix: &str,
) -> Result<Vec<Example>, CorpusError> {
    if !format.serves().contains(&subtask) {
        return Err(CorpusError::Schema {
            id: path.display().to_string(),
            message: format!("{format:?} sources do not annotate {subtask}"),
        });
    }
    let body = fs::read_to_string(path)?;
    let malformed = |line: usize, message: String| CorpusError::Malformed { path: path.to_path_buf(), line, message };
    let drafts = match format {
        SourceFormat::Canonical => {
            let mut out = Vec::new();
            for (i, line) in body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let record: super::CanonicalRecord =
                    serde_json::from_str(line).map_err(|e| malformed(i + 1, e.to_string()))?;
                out.push(record.into_example(subtask)?);
            }
            return Ok(out);
        }
        SourceFormat::BartAbsa => bartabsa(&body, subtask).map_err(|(l, m)| malformed(l, m))?,
        SourceFormat::Towe => towe(&body).map_err(|(l, m)| malformed(l, m))?,
        SourceFormat::AsteV2 => aste_v2(&body, subtask).map_err(|(l, m)| malformed(l, m))?,
        SourceFormat::Asqp => asqp(&body).map_err(|(l, m)| malformed(l, m))?,
    };
    let mut out = Vec::with_capacity(drafts.len());
    for (n, (sentence, gold)) in drafts.into_iter().enumerate() {
        let mut unique: Vec<SentimentTuple> = Vec::with_capacity(gold.len());
        for t in gold {
            if !unique.contains(&t) {
                unique.push(t);
            }
        }
        let example =
            Example { id: format!("{id_prefix}-{}", n + 1), subtask, sentence, given_aspect: None, gold: unique };
        example.validate()?;
        out.push(example);
    }
    Ok(out)
}

type Draft = (String, Vec<SentimentTuple>);
type LineError = (usize, String);

fn span(tokens: &[&str], indices: &[i64], line: usize) -> Result<String, LineError> {
    let (Some(&first), Some(&last)) = (indices.iter().min(), indices.iter().max()) else {
        return Err((line, "empty span".into()));
    };
    if first < 0 || last as usize >= tokens.len() {
        return Err((line, format!("span {first}..={last} outside {} tokens", tokens.len())));
    }
    Ok(tokens[first as usize..=last as usize].join(" "))
}

fn polarity(label: &str, line: usize) -> Result<Polarity, LineError> {
    Polarity::from_label(label).ok_or_else(|| (line, format!("unknown polarity {label:?}")))
}

fn split_hashes(line: &str, n: usize) -> Result<(&str, &str), LineError> {
    line.split_once("####").ok_or_else(|| (n, "missing `####` separator".into()))
}

fn aste_v2(body: &str, subtask: Subtask) -> Result<Vec<Draft>, LineError> {
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let n = i + 1;
        let (sentence, labels) = split_hashes(line, n)?;
        let sentence = sentence.trim();
        let tokens: Vec<&str> = sentence.split(' ').collect();
        let triples = PyValue::parse(labels).map_err(|m| (n, m))?;
        let mut gold = Vec::new();
        for triple in triples.as_list().ok_or((n, "labels are not a list".to_string()))? {
            let parts = triple
                .as_list()
                .filter(|p| p.len() == 3)
                .ok_or((n, "expected (aspect, opinion, sentiment)".to_string()))?;
            let aspect = span(&tokens, &parts[0].as_ints().ok_or((n, "bad aspect indices".to_string()))?, n)?;
            let opinion = span(&tokens, &parts[1].as_ints().ok_or((n, "bad opinion indices".to_string()))?, n)?;
            let pol = polarity(parts[2].as_str().ok_or((n, "bad sentiment".to_string()))?, n)?;
            let full = SentimentTuple::aste(&aspect, &opinion, pol);
            gold.push(full.project(subtask.output_elements()));
        }
        out.push((sentence.to_string(), gold));
    }
    Ok(out)
}

fn asqp(body: &str) -> Result<Vec<Draft>, LineError> {
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let n = i + 1;
        let (sentence, labels) = split_hashes(line, n)?;
        let quads = PyValue::parse(labels).map_err(|m| (n, m))?;
        let mut gold = Vec::new();
        for quad in quads.as_list().ok_or((n, "labels are not a list".to_string()))? {
            let parts: Vec<&str> = quad
                .as_list()
                .filter(|p| p.len() == 4)
                .and_then(|p| p.iter().map(PyValue::as_str).collect())
                .ok_or((n, "expected [aspect, category, sentiment, opinion]".to_string()))?;
            let pol = polarity(parts[2], n)?;
            gold.push(SentimentTuple::asqp(parts[0], parts[1], parts[3], pol));
        }
        out.push((sentence.trim().to_string(), gold));
    }
    Ok(out)
}

/// BIO spans from `word\B word\I word\O` tag strings.
fn bio_spans(tags: &str) -> Vec<String> {
    let mut spans = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for item in tags.split(' ').filter(|s| !s.is_empty()) {
        let (word, tag) = item.rsplit_once('\\').unwrap_or((item, "O"));
        match tag {
            "B" => {
                if !current.is_empty() {
                    spans.push(current.join(" "));
                }
                current = vec![word];
            }
            "I" if !current.is_empty() => current.push(word),
            "I" => current = vec![word],
            _ => {
                if !current.is_empty() {
                    spans.push(current.join(" "));
                    current.clear();
                }
            }
        }
    }
    if !current.is_empty() {
        spans.push(current.join(" "));
    }
    spans
}

fn towe(body: &str) -> Result<Vec<Draft>, LineError> {
    let mut out: Vec<Draft> = Vec::new();
    for (i, line) in body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let n = i + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err((n, format!("expected 4 tab-separated columns, found {}", cols.len())));
        }
        if n == 1 && cols[0] == "s_id" {
            continue;
        }
        let sentence = cols[1].trim();
        let targets = bio_spans(cols[2]);
        let [aspect] = targets.as_slice() else {
            return Err((n, format!("expected one target span, found {}", targets.len())));
        };
        let tuples = bio_spans(cols[3]).into_iter().map(|o| SentimentTuple {
            aspect: Some(aspect.clone()),
            opinion: Some(o),
            ..Default::default()
        });
        match out.last_mut() {
            Some((s, gold)) if s == sentence => gold.extend(tuples),
            _ => out.push((sentence.to_string(), tuples.collect())),
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct BartTerm {
    #[serde(default)]
    term: TermText,
    #[serde(default)]
    polarity: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(untagged)]
enum TermText {
    Tokens(Vec<String>),
    Text(String),
    #[default]
    Missing,
}

impl TermText {
    fn text(&self) -> Option<String> {
        match self {
            TermText::Tokens(t) if !t.is_empty() => Some(t.join(" ")),
            TermText::Text(s) if !s.trim().is_empty() => Some(s.clone()),
            _ => None,
        }
    }
}

#[derive(Deserialize)]
struct BartRecord {
    #[serde(default)]
    raw_words: Option<String>,
    #[serde(default)]
    words: Vec<String>,
    #[serde(default)]
    aspects: Vec<BartTerm>,
    #[serde(default)]
    opinions: Vec<BartTerm>,
}

fn bartabsa(body: &str, subtask: Subtask) -> Result<Vec<Draft>, LineError> {
    let records: Vec<BartRecord> = if body.trim_start().starts_with('[') {
        serde_json::from_str(body).map_err(|e| (e.line(), e.to_string()))?
    } else {
        body.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e.to_string())))
            .collect::<Result<_, _>>()?
    };
    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.into_iter().enumerate() {
        let sentence = rec.raw_words.clone().unwrap_or_else(|| rec.words.join(" "));
        let mut gold = Vec::new();
        match subtask {
            Subtask::Oe => {
                for o in rec.opinions.iter().filter_map(|o| o.term.text()) {
                    gold.push(
                        SentimentTuple::from_fields(&[Element::Opinion], &[o]).map_err(|e| (i + 1, e.to_string()))?,
                    );
                }
            }
            _ => {
                for a in &rec.aspects {
                    let Some(term) = a.term.text() else { continue };
                    if subtask == Subtask::Ae {
                        gold.push(SentimentTuple { aspect: Some(term), ..Default::default() });
                        continue;
                    }
                    let label = a.polarity.as_deref().unwrap_or_default();
                    match Polarity::from_label(label) {
                        Some(p) => {
                            gold.push(SentimentTuple { aspect: Some(term), polarity: Some(p), ..Default::default() })
                        }
                        None => warn!("record {}: aspect {term:?} has polarity {label:?}, skipped", i + 1),
                    }
                }
            }
        }
        out.push((sentence, gold));
    }
    Ok(out)
}

/// The subset of Python literal syntax used by the label columns.
#[derive(Debug, Clone, PartialEq)]
enum PyValue {
    List(Vec<PyValue>),
    Str(String),
    Int(i64),
}

impl PyValue {
    fn parse(src: &str) -> Result<PyValue, String> {
        let chars: Vec<char> = src.trim().chars().collect();
        let mut pos = 0;
        let value = Self::value(&chars, &mut pos, 0)?;
        skip_ws(&chars, &mut pos);
        if pos != chars.len() {
            return Err(format!("trailing input at column {pos}"));
        }
        Ok(value)
    }

    fn value(chars: &[char], pos: &mut usize, depth: usize) -> Result<PyValue, String> {
        if depth > 16 {
            return Err("nesting too deep".into());
        }
        skip_ws(chars, pos);
        match chars.get(*pos) {
            Some('[') | Some('(') => {
                let close = if chars[*pos] == '[' { ']' } else { ')' };
                *pos += 1;
                let mut items = Vec::new();
                loop {
                    skip_ws(chars, pos);
                    if chars.get(*pos) == Some(&close) {
                        *pos += 1;
                        return Ok(PyValue::List(items));
                    }
                    items.push(Self::value(chars, pos, depth + 1)?);
                    skip_ws(chars, pos);
                    match chars.get(*pos) {
                        Some(',') => *pos += 1,
                        Some(c) if *c == close => {}
                        other => return Err(format!("expected `,` or `{close}`, found {other:?}")),
                    }
                }
            }
            Some(&q) if q == '\'' || q == '"' => {
                *pos += 1;
                let mut s = String::new();
                while let Some(&c) = chars.get(*pos) {
                    *pos += 1;
                    match c {
                        '\\' => {
                            let next = chars.get(*pos).copied().ok_or("dangling escape")?;
                            *pos += 1;
                            s.push(match next {
                                'n' => '\n',
                                't' => '\t',
                                other => other,
                            });
                        }
                        c if c == q => return Ok(PyValue::Str(s)),
                        c => s.push(c),
                    }
                }
                Err("unterminated string".into())
            }
            Some(c) if c.is_ascii_digit() || *c == '-' => {
                let start = *pos;
                *pos += 1;
                while chars.get(*pos).is_some_and(|c| c.is_ascii_digit()) {
                    *pos += 1;
                }
                let text: String = chars[start..*pos].iter().collect();
                text.parse().map(PyValue::Int).map_err(|e| e.to_string())
            }
            other => Err(format!("unexpected {other:?}")),
        }
    }

    fn as_list(&self) -> Option<&[PyValue]> {
        match self {
            PyValue::List(items) => Some(items),
            _ => None,
        }
    }

    fn as_str(&self) -> Option<&str> {
        match self {
            PyValue::Str(s) => Some(s),
            _ => None,
        }
    }

    fn as_ints(&self) -> Option<Vec<i64>> {
        self.as_list()?
            .iter()
            .map(|v| match v {
                PyValue::Int(i) => Some(*i),
                _ => None,
            })
            .collect()
    }
}

fn skip_ws(chars: &[char], pos: &mut usize) {
    while chars.get(*pos).is_some_and(|c| c.is_whitespace()) {
        *pos += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("src.txt");
        fs::write(&path, body).unwrap();
        (dir, path)
    }

    #[test]
    fn python_literals() {
        let v = PyValue::parse("[([16, 17], [15], 'POS'), ([1], [2], \"NEG\")]").unwrap();
        let items = v.as_list().unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].as_list().unwrap()[0].as_ints().unwrap(), vec![16, 17]);
        assert_eq!(items[1].as_list().unwrap()[2].as_str(), Some("NEG"));
        assert_eq!(PyValue::parse(r"['chef \'s']").unwrap(), PyValue::List(vec![PyValue::Str("chef 's".into())]));
        assert!(PyValue::parse("[1, 2").is_err());
    }

    #[test]
    fn aste_v2_lines() {
        let (_d, path) = file(
            "The burger was delicious but the orange juice was not good .####[([1], [3], 'POS'), ([6, 7], [9, 10], 'NEG')]\n",
        );
        let ex = convert_file(&path, SourceFormat::AsteV2, Subtask::Aste, "R14-train").unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].id, "R14-train-1");
        assert_eq!(ex[0].gold[1], SentimentTuple::aste("orange juice", "not good", Polarity::Negative));
        let aesc = convert_file(&path, SourceFormat::AsteV2, Subtask::Aesc, "x").unwrap();
        assert_eq!(aesc[0].gold[0].opinion, None);
        assert!(convert_file(&path, SourceFormat::AsteV2, Subtask::Asqp, "x").is_err());
    }

    #[test]
    fn asqp_reorders_elements() {
        let (_d, path) = file("Great pizza .####[['pizza', 'food quality', 'positive', 'Great'], ['NULL', 'restaurant general', 'positive', 'NULL']]\n");
        let ex = convert_file(&path, SourceFormat::Asqp, Subtask::Asqp, "R15-test").unwrap();
        assert_eq!(ex[0].gold[0], SentimentTuple::asqp("pizza", "food quality", "Great", Polarity::Positive));
        assert_eq!(ex[0].gold[1].aspect.as_deref(), Some("NULL"));
    }

    #[test]
    fn towe_groups_rows_by_sentence() {
        let body = "s_id\tsentence\ttarget_tags\topinion_words_tags\n\
            1\tgood food bad service\tgood\\O food\\B bad\\O service\\O\tgood\\B food\\O bad\\O service\\O\n\
            1\tgood food bad service\tgood\\O food\\O bad\\O service\\B\tgood\\O food\\O bad\\B service\\O\n\
            2\tnice screen\tnice\\O screen\\B\tnice\\B screen\\O\n";
        let (_d, path) = file(body);
        let ex = convert_file(&path, SourceFormat::Towe, Subtask::Aoe, "L14-train").unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].gold.len(), 2);
        assert_eq!(ex[0].gold[1].aspect.as_deref(), Some("service"));
        assert_eq!(ex[0].gold[1].opinion.as_deref(), Some("bad"));
    }

    #[test]
    fn bartabsa_records() {
        let body = r#"[{"raw_words": "The battery life is great", "words": ["The","battery","life","is","great"],
            "aspects": [{"from": 1, "to": 3, "polarity": "POS", "term": ["battery","life"]}],
            "opinions": [{"from": 4, "to": 5, "term": ["great"]}]}]"#;
        let (_d, path) = file(body);
        let ae = convert_file(&path, SourceFormat::BartAbsa, Subtask::Ae, "L14").unwrap();
        assert_eq!(ae[0].gold[0].aspect.as_deref(), Some("battery life"));
        let oe = convert_file(&path, SourceFormat::BartAbsa, Subtask::Oe, "L14").unwrap();
        assert_eq!(oe[0].gold[0].opinion.as_deref(), Some("great"));
        let alsc = convert_file(&path, SourceFormat::BartAbsa, Subtask::Alsc, "L14").unwrap();
        assert_eq!(alsc[0].gold[0].polarity, Some(Polarity::Positive));
        assert!(!alsc[0].is_query());
    }

    #[test]
    fn bad_indices_report_line() {
        let (_d, path) = file("a b####[([5], [0], 'POS')]\n");
        let err = convert_file(&path, SourceFormat::AsteV2, Subtask::Aste, "x").unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 1, .. }));
    }
}
