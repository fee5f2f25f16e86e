//! Span extraction and exact-match precision / recall / F1.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::labels::{FullLabel, Seg, TypeLabel};

/// Inclusive token range with its type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: TypeLabel,
}

/// Spans of a BIO2 sequence. Lenient: an `I` that does not continue an open
/// span of its type starts a new one, and a type change breaks a span.
pub fn extract_spans(labels: &[FullLabel]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (t, l) in labels.iter().enumerate() {
        let continues = matches!(l.seg(), Seg::I | Seg::E)
            && open.as_ref().is_some_and(|s| &s.label == l.typ());
        if continues {
            open.as_mut().expect("checked").end = t;
        } else {
            spans.extend(open.take());
            if !l.is_outside() {
                open = Some(Span {
                    start: t,
                    end: t,
                    label: l.typ().clone(),
                });
            }
        }
        if matches!(l.seg(), Seg::E | Seg::S) {
            spans.extend(open.take());
        }
    }
    spans.extend(open);
    spans
}

/// BIO2 rendering of non-overlapping spans over `len` tokens.
pub fn render_spans(spans: &[Span], len: usize) -> Vec<FullLabel> {
    let mut out = vec![FullLabel::outside(); len];
    for s in spans {
        for (t, slot) in out.iter_mut().enumerate().take(s.end + 1).skip(s.start) {
            let seg = if t == s.start { Seg::B } else { Seg::I };
            *slot = crate::labels::compose(seg, s.label.clone()).expect("spans are typed");
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EvalMode {
    Full,
    SegOnly,
    TypeOnly,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Full => "full",
            EvalMode::SegOnly => "seg",
            EvalMode::TypeOnly => "typ",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(EvalMode::Full),
            "seg" | "segonly" => Ok(EvalMode::SegOnly),
            "typ" | "type" | "typeonly" => Ok(EvalMode::TypeOnly),
            _ => Err(Error::Config(format!("unknown evaluation mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl Prf1 {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf1 {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }

    /// `Pre Rec F1` as percentages, tab separated.
    pub fn table_row(&self) -> String {
        format!(
            "{:.2}\t{:.2}\t{:.2}",
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f1
        )
    }
}

impl fmt::Display for Prf1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Pre\tRec\tF1\ttp\tfp\tfn")?;
        write!(f, "{}\t{}\t{}\t{}", self.table_row(), self.tp, self.fp, self.fn_)
    }
}

/// Scores `pred` against `gold`, sentence by sentence.
pub fn span_f1(gold: &[Vec<FullLabel>], pred: &[Vec<FullLabel>], mode: EvalMode) -> Result<Prf1> {
    if gold.len() != pred.len() {
        return Err(Error::Usage(format!(
            "{} gold sentences but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Usage(format!(
                "sentence {i}: {} gold labels but {} predicted",
                g.len(),
                p.len()
            )));
        }
        match mode {
            EvalMode::TypeOnly => {
                for (a, b) in g.iter().zip(p) {
                    match (a.is_outside(), b.is_outside()) {
                        (false, false) if a.typ() == b.typ() => tp += 1,
                        (false, false) => {
                            fp += 1;
                            fn_ += 1;
                        }
                        (false, true) => fn_ += 1,
                        (true, false) => fp += 1,
                        (true, true) => {}
                    }
                }
            }
            EvalMode::Full | EvalMode::SegOnly => {
                let key = |s: Span| match mode {
                    EvalMode::Full => s,
                    _ => Span {
                        label: TypeLabel::O,
                        ..s
                    },
                };
                let gs: HashSet<Span> = extract_spans(g).into_iter().map(key).collect();
                let ps: HashSet<Span> = extract_spans(p).into_iter().map(key).collect();
                let hit = gs.intersection(&ps).count();
                tp += hit;
                fp += ps.len() - hit;
                fn_ += gs.len() - hit;
            }
        }
    }
    Ok(Prf1::from_counts(tp, fp, fn_))
}

/// Mean precision, recall and F1 over folds; counts are summed.
pub fn aggregate_folds(per_fold: &[Prf1]) -> Result<Prf1> {
    if per_fold.is_empty() {
        return Err(Error::Usage("no folds to aggregate".into()));
    }
    let n = per_fold.len() as f64;
    let mean = |f: fn(&Prf1) -> f64| per_fold.iter().map(f).sum::<f64>() / n;
    Ok(Prf1 {
        precision: mean(|p| p.precision),
        recall: mean(|p| p.recall),
        f1: mean(|p| p.f1),
        tp: per_fold.iter().map(|p| p.tp).sum(),
        fp: per_fold.iter().map(|p| p.fp).sum(),
        fn_: per_fold.iter().map(|p| p.fn_).sum(),
    })
}

/// First epoch (1-based) at which `curve` reaches `fraction` of its final
/// value.
pub fn epochs_to_reach(curve: &[f64], fraction: f64) -> Option<usize> {
    let last = *curve.last()?;
    curve.iter().position(|&v| v >= fraction * last).map(|i| i + 1)
}

/// Median of a nonempty sample; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> Vec<FullLabel> {
        s.split_whitespace().map(|l| l.parse().unwrap()).collect()
    }

    fn span(start: usize, end: usize, t: &str) -> Span {
        Span {
            start,
            end,
            label: TypeLabel::new(t),
        }
    }

    #[test]
    fn extraction_examples() {
        assert_eq!(extract_spans(&seq("B-pos I-pos O")), vec![span(0, 1, "pos")]);
        assert!(extract_spans(&seq("O O O")).is_empty());
        assert_eq!(
            extract_spans(&seq("B-pos B-neg")),
            vec![span(0, 0, "pos"), span(1, 1, "neg")]
        );
    }

    #[test]
    fn lenient_extraction() {
        assert_eq!(extract_spans(&seq("I-pos I-pos")), vec![span(0, 1, "pos")]);
        assert_eq!(
            extract_spans(&seq("B-pos I-neg")),
            vec![span(0, 0, "pos"), span(1, 1, "neg")]
        );
    }

    #[test]
    fn perfect_prediction() {
        let g = vec![seq("B-pos I-pos O B-neg")];
        let r = span_f1(&g, &g, EvalMode::Full).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn wrong_type_right_boundaries() {
        let g = vec![seq("B-pos I-pos O")];
        let p = vec![seq("B-neg I-neg O")];
        assert_eq!(span_f1(&g, &p, EvalMode::Full).unwrap().f1, 0.0);
        assert_eq!(span_f1(&g, &p, EvalMode::SegOnly).unwrap().f1, 1.0);
    }

    #[test]
    fn one_right_one_spurious() {
        let g = vec![seq("B-pos O B-neg O")];
        let p = vec![seq("B-pos O O B-neg")];
        let r = span_f1(&g, &p, EvalMode::Full).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        assert_eq!(r.tp + r.fn_, 2);
    }

    #[test]
    fn type_only_is_token_level() {
        let g = vec![seq("B-pos I-pos O")];
        let p = vec![seq("B-pos B-neg B-pos")];
        let r = span_f1(&g, &p, EvalMode::TypeOnly).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 2, 1));
    }

    #[test]
    fn misaligned_is_usage_error() {
        let g = vec![seq("O O")];
        assert!(matches!(span_f1(&g, &[], EvalMode::Full), Err(Error::Usage(_))));
        assert!(matches!(
            span_f1(&g, &[seq("O")], EvalMode::Full),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn fold_aggregation() {
        let a = Prf1::from_counts(2, 3, 3);
        let b = Prf1::from_counts(3, 2, 2);
        let m = aggregate_folds(&[a, b]).unwrap();
        assert!((m.f1 - 0.5).abs() < 1e-12);
        assert_eq!(aggregate_folds(&[a, a]).unwrap().f1, a.f1);
        assert_eq!(aggregate_folds(&[b, a]).unwrap(), m);
        assert!(matches!(aggregate_folds(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_denominators() {
        let r = Prf1::from_counts(0, 0, 0);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn curve_helpers() {
        assert_eq!(epochs_to_reach(&[0.1, 0.5, 0.95, 1.0, 0.9], 0.9), Some(3));
        assert_eq!(epochs_to_reach(&[0.1, 0.5, 0.6, 1.0], 0.9), Some(4));
        assert_eq!(epochs_to_reach(&[], 0.9), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
