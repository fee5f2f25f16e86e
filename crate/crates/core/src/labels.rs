//! Composite labels, their segmentation/type projections, and BIO2/BIOES
//! tagging schemes.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Bio2,
    Bioes,
}

impl Scheme {
    /// Segmentation alphabet, `O` first.
    pub fn seg_alphabet(self) -> &'static [Seg] {
        match self {
            Scheme::Bio2 => &[Seg::O, Seg::B, Seg::I],
            Scheme::Bioes => &[Seg::O, Seg::B, Seg::I, Seg::E, Seg::S],
        }
    }

    pub fn contains(self, seg: Seg) -> bool {
        self.seg_alphabet().contains(&seg)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Bio2 => "BIO2",
            Scheme::Bioes => "BIOES",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BIO2" | "BIO" => Ok(Scheme::Bio2),
            "BIOES" => Ok(Scheme::Bioes),
            _ => Err(Error::Config(format!("unknown tagging scheme `{s}`"))),
        }
    }
}

/// Segmentation part of a label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Seg {
    B,
    I,
    E,
    S,
    O,
}

impl Seg {
    pub fn as_str(self) -> &'static str {
        match self {
            Seg::B => "B",
            Seg::I => "I",
            Seg::E => "E",
            Seg::S => "S",
            Seg::O => "O",
        }
    }
}

impl fmt::Display for Seg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Seg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" => Ok(Seg::B),
            "I" => Ok(Seg::I),
            "E" => Ok(Seg::E),
            "S" => Ok(Seg::S),
            "O" => Ok(Seg::O),
            _ => Err(Error::Parse {
                line: 0,
                message: format!("`{s}` is not a segmentation label"),
            }),
        }
    }
}

/// Type part of a label: a task type such as a sentiment, or `O`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeLabel {
    O,
    Type(String),
}

impl TypeLabel {
    pub fn new(s: &str) -> Self {
        if s == "O" {
            TypeLabel::O
        } else {
            TypeLabel::Type(s.to_string())
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, TypeLabel::O)
    }

    pub fn as_str(&self) -> &str {
        match self {
            TypeLabel::O => "O",
            TypeLabel::Type(t) => t,
        }
    }
}

impl fmt::Display for TypeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A composite tag. `seg` is `O` exactly when `typ` is `O`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FullLabel {
    seg: Seg,
    typ: TypeLabel,
}

impl FullLabel {
    pub fn outside() -> Self {
        FullLabel {
            seg: Seg::O,
            typ: TypeLabel::O,
        }
    }

    pub fn seg(&self) -> Seg {
        self.seg
    }

    pub fn typ(&self) -> &TypeLabel {
        &self.typ
    }

    pub fn is_outside(&self) -> bool {
        self.seg == Seg::O
    }

    pub fn with_seg(&self, seg: Seg) -> Self {
        FullLabel {
            seg,
            typ: self.typ.clone(),
        }
    }
}

impl fmt::Display for FullLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.typ {
            TypeLabel::O => f.write_str("O"),
            TypeLabel::Type(t) => write!(f, "{}-{t}", self.seg),
        }
    }
}

impl FromStr for FullLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(FullLabel::outside());
        }
        let parse_err = || Error::Parse {
            line: 0,
            message: format!("`{s}` is not a label of the form O or SEG-TYPE"),
        };
        let (seg, typ) = s.split_once('-').ok_or_else(parse_err)?;
        let seg: Seg = seg.parse().map_err(|_| parse_err())?;
        if seg == Seg::O || typ.is_empty() || typ == "O" {
            return Err(parse_err());
        }
        Ok(FullLabel {
            seg,
            typ: TypeLabel::Type(typ.to_string()),
        })
    }
}

/// Splits a composite label into its segmentation and type parts.
pub fn decompose(label: &FullLabel) -> (Seg, TypeLabel) {
    (label.seg, label.typ.clone())
}

/// Inverse of [`decompose`]; a pair mixing `O` with a non-`O` part is rejected.
pub fn compose(seg: Seg, typ: TypeLabel) -> Result<FullLabel> {
    if (seg == Seg::O) != typ.is_outside() {
        return Err(Error::Consistency(format!(
            "cannot compose segmentation `{seg}` with type `{typ}`"
        )));
    }
    Ok(FullLabel { seg, typ })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// The segmentation tag does not belong to the scheme.
    OutsideAlphabet,
    /// `I` or `E` with no span open.
    NoOpenSpan,
    /// Span continuation with a different type than the open span.
    TypeMismatch,
    /// A BIOES span that is not closed by `E`.
    UnclosedSpan,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub position: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at position {}", self.kind, self.position)
    }
}

/// Lists every well-formedness violation of `seq` under `scheme`.
pub fn validate_sequence(seq: &[FullLabel], scheme: Scheme) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut open: Option<&TypeLabel> = None;
    let mut push = |position, kind| out.push(Violation { position, kind });
    for (t, label) in seq.iter().enumerate() {
        if !scheme.contains(label.seg) {
            push(t, ViolationKind::OutsideAlphabet);
            open = None;
            continue;
        }
        match scheme {
            Scheme::Bio2 => match label.seg {
                Seg::I => match open {
                    None => push(t, ViolationKind::NoOpenSpan),
                    Some(ty) if *ty != label.typ => push(t, ViolationKind::TypeMismatch),
                    _ => {}
                },
                _ => {}
            },
            Scheme::Bioes => {
                let continuing = matches!(label.seg, Seg::I | Seg::E);
                match (open, continuing) {
                    (Some(_), false) => push(t, ViolationKind::UnclosedSpan),
                    (None, true) => push(t, ViolationKind::NoOpenSpan),
                    (Some(ty), true) if *ty != label.typ => push(t, ViolationKind::TypeMismatch),
                    _ => {}
                }
            }
        }
        open = match label.seg {
            Seg::B | Seg::I => Some(&label.typ),
            _ => None,
        };
    }
    if scheme == Scheme::Bioes && open.is_some() {
        push(seq.len(), ViolationKind::UnclosedSpan);
    }
    out
}

/// Converts a well-formed BIO2 sequence to BIOES.
pub fn bio2_to_bioes(seq: &[FullLabel]) -> Result<Vec<FullLabel>> {
    let violations = validate_sequence(seq, Scheme::Bio2);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Validation(format!(
            "invalid BIO2 sequence: {}",
            list.join(", ")
        )));
    }
    Ok(seq
        .iter()
        .enumerate()
        .map(|(t, label)| {
            let continues = seq
                .get(t + 1)
                .is_some_and(|next| next.seg == Seg::I && next.typ == label.typ);
            match (label.seg, continues) {
                (Seg::B, false) => label.with_seg(Seg::S),
                (Seg::I, false) => label.with_seg(Seg::E),
                _ => label.clone(),
            }
        })
        .collect())
}

/// Maps `S` to `B` and `E` to `I`; total on the BIOES alphabet.
pub fn bioes_to_bio2(seq: &[FullLabel]) -> Vec<FullLabel> {
    seq.iter()
        .map(|label| match label.seg {
            Seg::S => label.with_seg(Seg::B),
            Seg::E => label.with_seg(Seg::I),
            _ => label.clone(),
        })
        .collect()
}

/// Segmentation-only counterpart of [`bio2_to_bioes`].
pub fn seg_bio2_to_bioes(seq: &[Seg]) -> Result<Vec<Seg>> {
    let full: Vec<FullLabel> = seq.iter().map(|&s| seg_placeholder(s)).collect();
    Ok(bio2_to_bioes(&full)?.iter().map(|l| l.seg).collect())
}

pub fn seg_bioes_to_bio2(seq: &[Seg]) -> Vec<Seg> {
    seq.iter()
        .map(|s| match s {
            Seg::S => Seg::B,
            Seg::E => Seg::I,
            other => *other,
        })
        .collect()
}

/// A full label carrying `seg` and a single anonymous type, used to reuse
/// span machinery on segmentation-only sequences.
pub fn seg_placeholder(seg: Seg) -> FullLabel {
    if seg == Seg::O {
        FullLabel::outside()
    } else {
        FullLabel {
            seg,
            typ: TypeLabel::Type("SPAN".into()),
        }
    }
}

/// Projects a BIOES full-label sequence onto the type alphabet.
pub fn type_projection(seq: &[FullLabel]) -> Vec<TypeLabel> {
    seq.iter().map(|l| l.typ.clone()).collect()
}

pub fn seg_projection(seq: &[FullLabel]) -> Vec<Seg> {
    seq.iter().map(|l| l.seg).collect()
}

/// Dense indexing of the segmentation, type and full label alphabets.
///
/// Index 0 is always `O`; full labels follow in segmentation-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSpace {
    scheme: Scheme,
    types: Vec<String>,
    full: Vec<FullLabel>,
    typ: Vec<TypeLabel>,
    full_index: HashMap<FullLabel, usize>,
    typ_index: HashMap<TypeLabel, usize>,
}

impl LabelSpace {
    pub fn new(scheme: Scheme, types: &[impl AsRef<str>]) -> Result<Self> {
        let types: Vec<String> = types.iter().map(|t| t.as_ref().to_string()).collect();
        if types.is_empty() {
            return Err(Error::Config("type alphabet is empty".into()));
        }
        for (i, t) in types.iter().enumerate() {
            if t.is_empty() || t == "O" || t.contains(char::is_whitespace) {
                return Err(Error::Config(format!("invalid type name `{t}`")));
            }
            if types[..i].contains(t) {
                return Err(Error::Config(format!("duplicate type `{t}`")));
            }
        }
        let mut full = vec![FullLabel::outside()];
        for &seg in &scheme.seg_alphabet()[1..] {
            for t in &types {
                full.push(FullLabel {
                    seg,
                    typ: TypeLabel::Type(t.clone()),
                });
            }
        }
        let typ: Vec<TypeLabel> = std::iter::once(TypeLabel::O)
            .chain(types.iter().map(|t| TypeLabel::Type(t.clone())))
            .collect();
        let full_index = full.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();
        let typ_index = typ.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();
        Ok(LabelSpace {
            scheme,
            types,
            full,
            typ,
            full_index,
            typ_index,
        })
    }

    /// The same types under another scheme.
    pub fn with_scheme(&self, scheme: Scheme) -> Self {
        LabelSpace::new(scheme, &self.types).expect("types already validated")
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn full_labels(&self) -> &[FullLabel] {
        &self.full
    }

    pub fn seg_labels(&self) -> &'static [Seg] {
        self.scheme.seg_alphabet()
    }

    pub fn type_labels(&self) -> &[TypeLabel] {
        &self.typ
    }

    pub fn num_full(&self) -> usize {
        self.full.len()
    }

    pub fn num_seg(&self) -> usize {
        self.seg_labels().len()
    }

    pub fn num_types(&self) -> usize {
        self.typ.len()
    }

    pub fn full_index(&self, label: &FullLabel) -> Option<usize> {
        self.full_index.get(label).copied()
    }

    pub fn seg_index(&self, seg: Seg) -> Option<usize> {
        self.seg_labels().iter().position(|&s| s == seg)
    }

    pub fn type_index(&self, typ: &TypeLabel) -> Option<usize> {
        self.typ_index.get(typ).copied()
    }

    pub fn full_label(&self, index: usize) -> &FullLabel {
        &self.full[index]
    }

    pub fn seg_label(&self, index: usize) -> Seg {
        self.seg_labels()[index]
    }

    pub fn type_label(&self, index: usize) -> &TypeLabel {
        &self.typ[index]
    }

    pub fn contains(&self, label: &FullLabel) -> bool {
        self.full_index.contains_key(label)
    }

    /// Whether the scheme allows `from` to be followed by `to`, where `None`
    /// stands for the sentence start (as `from`) or end (as `to`).
    pub fn transition_allowed(&self, from: Option<&FullLabel>, to: Option<&FullLabel>) -> bool {
        let open = from.and_then(|l| match l.seg {
            Seg::B | Seg::I => Some(&l.typ),
            _ => None,
        });
        match self.scheme {
            Scheme::Bio2 => match to {
                Some(next) if next.seg == Seg::I => open == Some(&next.typ),
                _ => true,
            },
            Scheme::Bioes => match (open, to) {
                (Some(ty), Some(next)) => matches!(next.seg, Seg::I | Seg::E) && next.typ == *ty,
                (Some(_), None) => false,
                (None, Some(next)) => !matches!(next.seg, Seg::I | Seg::E),
                (None, None) => true,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(s: &str) -> FullLabel {
        s.parse().unwrap()
    }

    fn seq(s: &str) -> Vec<FullLabel> {
        s.split_whitespace().map(l).collect()
    }

    #[test]
    fn decompose_examples() {
        assert_eq!(decompose(&l("B-neutral")), (Seg::B, TypeLabel::new("neutral")));
        assert_eq!(decompose(&l("O")), (Seg::O, TypeLabel::O));
        assert_eq!(decompose(&l("I-positive")), (Seg::I, TypeLabel::new("positive")));
        assert!("X-pos".parse::<FullLabel>().is_err());
        assert!("B".parse::<FullLabel>().is_err());
        assert!("B-".parse::<FullLabel>().is_err());
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose(Seg::B, TypeLabel::new("neutral")).unwrap().to_string(), "B-neutral");
        assert_eq!(compose(Seg::O, TypeLabel::O).unwrap().to_string(), "O");
        let y = compose(Seg::B, TypeLabel::new("positive")).unwrap();
        assert_eq!(decompose(&y), (Seg::B, TypeLabel::new("positive")));
        assert!(matches!(compose(Seg::B, TypeLabel::O), Err(Error::Consistency(_))));
        assert!(matches!(
            compose(Seg::O, TypeLabel::new("positive")),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn bio2_to_bioes_examples() {
        assert_eq!(bio2_to_bioes(&seq("B-pos")).unwrap(), seq("S-pos"));
        assert_eq!(bio2_to_bioes(&seq("B-pos I-pos")).unwrap(), seq("B-pos E-pos"));
        assert_eq!(
            bio2_to_bioes(&seq("O B-neg I-neg I-neg O")).unwrap(),
            seq("O B-neg I-neg E-neg O")
        );
        assert_eq!(bio2_to_bioes(&seq("B-pos B-pos")).unwrap(), seq("S-pos S-pos"));
        let err = bio2_to_bioes(&seq("O I-pos")).unwrap_err().to_string();
        assert!(err.contains("position 1"), "{err}");
    }

    #[test]
    fn bioes_to_bio2_examples() {
        assert_eq!(bioes_to_bio2(&seq("S-pos")), seq("B-pos"));
        assert_eq!(bioes_to_bio2(&seq("E-pos")), seq("I-pos"));
    }

    #[test]
    fn validate_examples() {
        assert!(validate_sequence(&seq("O O"), Scheme::Bio2).is_empty());
        assert_eq!(
            validate_sequence(&seq("I-pos"), Scheme::Bio2),
            vec![Violation {
                position: 0,
                kind: ViolationKind::NoOpenSpan
            }]
        );
        assert_eq!(
            validate_sequence(&seq("B-pos E-neg"), Scheme::Bioes),
            vec![Violation {
                position: 1,
                kind: ViolationKind::TypeMismatch
            }]
        );
        assert_eq!(
            validate_sequence(&seq("B-pos O"), Scheme::Bioes)[0].kind,
            ViolationKind::UnclosedSpan
        );
        assert_eq!(
            validate_sequence(&seq("B-pos"), Scheme::Bioes)[0].kind,
            ViolationKind::UnclosedSpan
        );
        assert_eq!(
            validate_sequence(&seq("S-pos"), Scheme::Bio2)[0].kind,
            ViolationKind::OutsideAlphabet
        );
        assert!(validate_sequence(&seq("B-a I-a E-a S-b O"), Scheme::Bioes).is_empty());
    }

    #[test]
    fn label_space_sizes() {
        assert_eq!(LabelSpace::new(Scheme::Bioes, &["PER", "LOC", "ORG", "MISC"]).unwrap().num_full(), 17);
        assert_eq!(LabelSpace::new(Scheme::Bio2, &["pos", "neu", "neg"]).unwrap().num_full(), 7);
        assert_eq!(LabelSpace::new(Scheme::Bioes, &["x"]).unwrap().num_full(), 5);
        assert!(LabelSpace::new(Scheme::Bio2, &[] as &[&str]).is_err());
        assert!(LabelSpace::new(Scheme::Bio2, &["a", "a"]).is_err());
    }

    #[test]
    fn label_space_indices_are_dense() {
        let space = LabelSpace::new(Scheme::Bioes, &["pos", "neg"]).unwrap();
        for (i, label) in space.full_labels().iter().enumerate() {
            assert_eq!(space.full_index(label), Some(i));
        }
        assert_eq!(space.full_index(&FullLabel::outside()), Some(0));
        assert_eq!(space.seg_index(Seg::O), Some(0));
        assert_eq!(space.type_index(&TypeLabel::O), Some(0));
        assert_eq!(space.num_types(), 3);
        assert_eq!(space.num_seg(), 5);
    }

    #[test]
    fn transitions_follow_scheme() {
        let space = LabelSpace::new(Scheme::Bioes, &["pos", "neg"]).unwrap();
        let o = FullLabel::outside();
        assert!(!space.transition_allowed(Some(&o), Some(&l("I-pos"))));
        assert!(space.transition_allowed(Some(&l("B-pos")), Some(&l("I-pos"))));
        assert!(!space.transition_allowed(Some(&l("B-pos")), Some(&l("B-neg"))));
        assert!(!space.transition_allowed(Some(&l("B-pos")), None));
        assert!(!space.transition_allowed(None, Some(&l("E-pos"))));
        assert!(space.transition_allowed(None, Some(&l("S-pos"))));
    }
}
