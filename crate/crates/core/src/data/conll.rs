//! Token-per-line CoNLL-style text files.
//!
//! Sentences are separated by blank lines. Columns are whitespace separated
//! and the label is the last column; a file with a single column is
//! unlabeled. Whether a labeled file carries full labels, bare segmentation
//! tags or bare types is inferred from the label alphabet unless an explicit
//! availability is given.

use std::fs;
use std::path::Path;

use crate::data::{AnnotatedSentence, Annotation, Availability, Corpus, Token};
use crate::error::{Error, Result};
use crate::labels::{seg_placeholder, validate_sequence, FullLabel, LabelSpace, Seg, TypeLabel};

struct RawSentence {
    first_line: usize,
    tokens: Vec<String>,
    labels: Vec<(usize, String)>,
}

pub fn read_conll(path: &Path, space: &LabelSpace, availability: Option<Availability>) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut corpus = read_conll_str(&text, space, availability)?;
    corpus.provenance = path.display().to_string();
    Ok(corpus)
}

pub fn read_conll_str(
    text: &str,
    space: &LabelSpace,
    availability: Option<Availability>,
) -> Result<Corpus> {
    let mut raw = Vec::new();
    let mut current: Option<RawSentence> = None;
    let mut columns: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            if let Some(s) = current.take() {
                raw.push(s);
            }
            continue;
        }
        match columns {
            None => columns = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {c} columns, found {}", fields.len()),
                })
            }
            _ => {}
        }
        let s = current.get_or_insert_with(|| RawSentence {
            first_line: line_no,
            tokens: Vec::new(),
            labels: Vec::new(),
        });
        s.tokens.push(fields[0].to_string());
        if fields.len() > 1 {
            s.labels.push((line_no, fields[fields.len() - 1].to_string()));
        }
    }
    if let Some(s) = current.take() {
        raw.push(s);
    }

    let labeled = columns.is_some_and(|c| c > 1);
    let availability = match (availability, labeled) {
        (Some(a), _) => a,
        (None, false) => Availability::Unlabeled,
        (None, true) => infer_availability(&raw, space)?,
    };
    if availability != Availability::Unlabeled && !labeled {
        return Err(Error::Parse {
            line: 1,
            message: format!("{availability} availability requested but the file has no label column"),
        });
    }

    let mut corpus = Corpus::new(space.clone(), "<memory>");
    for (id, r) in raw.into_iter().enumerate() {
        let tokens = r.tokens.into_iter().map(Token::new).collect();
        let annotation = match availability {
            Availability::Unlabeled => Annotation::Unlabeled,
            Availability::Full => {
                let labels = r
                    .labels
                    .iter()
                    .map(|(line, l)| parse_full(*line, l, space))
                    .collect::<Result<Vec<_>>>()?;
                check_sequence(&labels, space, r.first_line)?;
                Annotation::Full(labels)
            }
            Availability::SegOnly => {
                let segs = r
                    .labels
                    .iter()
                    .map(|(line, l)| parse_seg(*line, l, space))
                    .collect::<Result<Vec<_>>>()?;
                let as_full: Vec<FullLabel> = segs.iter().map(|&s| seg_placeholder(s)).collect();
                check_sequence(&as_full, space, r.first_line)?;
                Annotation::SegOnly(segs)
            }
            Availability::TypeOnly => Annotation::TypeOnly(
                r.labels
                    .iter()
                    .map(|(line, l)| parse_type(*line, l, space))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        corpus.sentences.push(AnnotatedSentence::new(id, tokens, annotation)?);
    }
    Ok(corpus)
}

fn infer_availability(raw: &[RawSentence], space: &LabelSpace) -> Result<Availability> {
    let labels = || raw.iter().flat_map(|s| s.labels.iter());
    let is_seg = |l: &str| l.parse::<Seg>().is_ok();
    let is_type = |l: &str| l == "O" || space.types().iter().any(|t| t == l);
    let is_full = |l: &str| l.parse::<FullLabel>().is_ok();
    // An all-O file reads as Full.
    if labels().all(|(_, l)| is_full(l)) {
        Ok(Availability::Full)
    } else if labels().all(|(_, l)| is_seg(l)) {
        Ok(Availability::SegOnly)
    } else if labels().all(|(_, l)| is_type(l)) {
        Ok(Availability::TypeOnly)
    } else {
        let (line, label) = labels()
            .find(|(_, l)| !is_full(l))
            .expect("some label is not a full label");
        Err(Error::Parse {
            line: *line,
            message: format!("cannot infer label kind from `{label}`"),
        })
    }
}

fn parse_full(line: usize, s: &str, space: &LabelSpace) -> Result<FullLabel> {
    let label: FullLabel = s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("`{s}` is not a full label"),
    })?;
    if !space.contains(&label) {
        return Err(Error::Validation(format!(
            "line {line}: label `{s}` is not in the {} label space",
            space.scheme()
        )));
    }
    Ok(label)
}

fn parse_seg(line: usize, s: &str, space: &LabelSpace) -> Result<Seg> {
    match s.parse::<Seg>() {
        Ok(seg) if space.scheme().contains(seg) => Ok(seg),
        _ => Err(Error::Parse {
            line,
            message: format!("`{s}` is not a {} segmentation tag", space.scheme()),
        }),
    }
}

fn parse_type(line: usize, s: &str, space: &LabelSpace) -> Result<TypeLabel> {
    let t = TypeLabel::new(s);
    if space.type_index(&t).is_none() {
        return Err(Error::Parse {
            line,
            message: format!("`{s}` is not a known type"),
        });
    }
    Ok(t)
}

fn check_sequence(labels: &[FullLabel], space: &LabelSpace, first_line: usize) -> Result<()> {
    let violations = validate_sequence(labels, space.scheme());
    if let Some(v) = violations.first() {
        return Err(Error::Validation(format!(
            "sentence starting at line {first_line}: {v} (line {})",
            first_line + v.position
        )));
    }
    Ok(())
}

/// Renders a corpus in the format accepted by [`read_conll_str`].
pub fn write_conll_string(corpus: &Corpus) -> String {
    let mut out = String::new();
    for (i, s) in corpus.sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (t, tok) in s.tokens.iter().enumerate() {
            out.push_str(&tok.surface);
            match &s.annotation {
                Annotation::Full(l) => out.push_str(&format!("\t{}", l[t])),
                Annotation::SegOnly(l) => out.push_str(&format!("\t{}", l[t])),
                Annotation::TypeOnly(l) => out.push_str(&format!("\t{}", l[t])),
                Annotation::Unlabeled => {}
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_conll(corpus: &Corpus, path: &Path) -> Result<()> {
    fs::write(path, write_conll_string(corpus)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Scheme;

    fn space() -> LabelSpace {
        LabelSpace::new(Scheme::Bio2, &["positive", "neutral", "negative"]).unwrap()
    }

    #[test]
    fn reads_full_sentence() {
        let c = read_conll_str("Green B-positive\nBook I-positive\n", &space(), None).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sentences[0].availability(), Availability::Full);
        assert_eq!(c.sentences[0].full_labels().unwrap()[1].to_string(), "I-positive");
    }

    #[test]
    fn infers_seg_only() {
        let c = read_conll_str("a B\nb I\nc O\n\nd O\n", &space(), None).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.sentences.iter().all(|s| s.availability() == Availability::SegOnly));
    }

    #[test]
    fn infers_type_only() {
        let c = read_conll_str("a positive\nb O\n", &space(), None).unwrap();
        assert_eq!(c.sentences[0].availability(), Availability::TypeOnly);
    }

    #[test]
    fn empty_and_unlabeled() {
        assert!(read_conll_str("", &space(), None).unwrap().is_empty());
        let c = read_conll_str("a\nb\n\nc\n", &space(), None).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.sentences[1].availability(), Availability::Unlabeled);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match read_conll_str("a O\nb\n", &space(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_sequence_is_validation_error() {
        assert!(matches!(
            read_conll_str("a O\nb I-positive\n", &space(), None),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            read_conll_str("a B-happy\n", &space(), None),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn write_then_read() {
        let text = "Green\tB-positive\nBook\tI-positive\nis\tO\n\nCNN\tB-neutral\n";
        let c = read_conll_str(text, &space(), None).unwrap();
        assert_eq!(write_conll_string(&c), text);
    }
}
