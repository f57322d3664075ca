use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Literal used by the quadruple datasets for an implicit aspect or opinion.
pub const IMPLICIT: &str = "NULL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }

    /// Maps common label spellings (`POS`, `Positive`, `neg`, ...) into the
    /// closed vocabulary. Returns `None` for anything else.
    pub fn from_label(label: &str) -> Option<Polarity> {
        let folded = crate::text::trim_edge_punct(label.trim()).to_lowercase();
        match folded.as_str() {
            "positive" | "pos" | "p" => Some(Polarity::Positive),
            "negative" | "neg" | "n" => Some(Polarity::Negative),
            "neutral" | "neu" | "neut" | "0" => Some(Polarity::Neutral),
            _ => None,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Strict parse: only the three canonical lowercase names are accepted.
impl FromStr for Polarity {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            "neutral" => Ok(Polarity::Neutral),
            other => Err(CorpusError::UnknownPolarity(other.to_string())),
        }
    }
}

/// One of the four sentiment elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Element {
    Aspect,
    Category,
    Opinion,
    Polarity,
}

impl Element {
    /// Human-readable name, as used in instructions.
    pub fn label(self) -> &'static str {
        match self {
            Element::Aspect => "aspect term",
            Element::Category => "aspect category",
            Element::Opinion => "opinion term",
            Element::Polarity => "sentiment polarity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subtask {
    #[serde(rename = "AE")]
    Ae,
    #[serde(rename = "OE")]
    Oe,
    #[serde(rename = "ALSC")]
    Alsc,
    #[serde(rename = "AOE")]
    Aoe,
    #[serde(rename = "AESC")]
    Aesc,
    #[serde(rename = "AOPE")]
    Aope,
    #[serde(rename = "ASTE")]
    Aste,
    #[serde(rename = "ASQP")]
    Asqp,
}

impl Subtask {
    pub const ALL: [Subtask; 8] = [
        Subtask::Ae,
        Subtask::Oe,
        Subtask::Alsc,
        Subtask::Aoe,
        Subtask::Aesc,
        Subtask::Aope,
        Subtask::Aste,
        Subtask::Asqp,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Subtask::Ae => "AE",
            Subtask::Oe => "OE",
            Subtask::Alsc => "ALSC",
            Subtask::Aoe => "AOE",
            Subtask::Aesc => "AESC",
            Subtask::Aope => "AOPE",
            Subtask::Aste => "ASTE",
            Subtask::Asqp => "ASQP",
        }
    }

    /// ALSC and AOE receive an aspect term alongside the sentence.
    pub fn aspect_conditioned(self) -> bool {
        matches!(self, Subtask::Alsc | Subtask::Aoe)
    }

    pub fn output_elements(self) -> &'static [Element] {
        use Element::*;
        match self {
            Subtask::Ae => &[Aspect],
            Subtask::Oe => &[Opinion],
            Subtask::Alsc => &[Polarity],
            Subtask::Aoe => &[Opinion],
            Subtask::Aesc => &[Aspect, Polarity],
            Subtask::Aope => &[Aspect, Opinion],
            Subtask::Aste => &[Aspect, Opinion, Polarity],
            Subtask::Asqp => &[Aspect, Category, Opinion, Polarity],
        }
    }

    /// Element layout of sentence-level records on disk. For aspect-conditioned
    /// subtasks the aspect is stored in front of the output elements so a single
    /// line can carry every aspect of the sentence.
    pub fn sentence_level_elements(self) -> &'static [Element] {
        use Element::*;
        match self {
            Subtask::Alsc => &[Aspect, Polarity],
            Subtask::Aoe => &[Aspect, Opinion],
            other => other.output_elements(),
        }
    }

    pub fn arity(self) -> usize {
        self.output_elements().len()
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Subtask {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subtask::ALL
            .into_iter()
            .find(|t| t.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CorpusError::UnknownSubtask(s.to_string()))
    }
}

/// The four annotation sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DatasetGroup {
    D17,
    D19,
    D20,
    D21,
}

impl DatasetGroup {
    pub const ALL: [DatasetGroup; 4] = [DatasetGroup::D17, DatasetGroup::D19, DatasetGroup::D20, DatasetGroup::D21];

    pub fn id(self) -> &'static str {
        match self {
            DatasetGroup::D17 => "D17",
            DatasetGroup::D19 => "D19",
            DatasetGroup::D20 => "D20",
            DatasetGroup::D21 => "D21",
        }
    }

    pub fn serves(self) -> &'static [Subtask] {
        match self {
            DatasetGroup::D17 => &[Subtask::Ae, Subtask::Oe, Subtask::Alsc],
            DatasetGroup::D19 => &[Subtask::Aoe],
            DatasetGroup::D20 => &[Subtask::Aesc, Subtask::Aope, Subtask::Aste],
            DatasetGroup::D21 => &[Subtask::Asqp],
        }
    }

    pub fn has_validation(self) -> bool {
        matches!(self, DatasetGroup::D20 | DatasetGroup::D21)
    }

    pub fn dataset_names(self) -> &'static [&'static str] {
        match self {
            DatasetGroup::D17 => &["L14", "R14", "R15"],
            DatasetGroup::D19 | DatasetGroup::D20 => &["L14", "R14", "R15", "R16"],
            DatasetGroup::D21 => &["R15", "R16"],
        }
    }

    /// The group that annotates `subtask`.
    pub fn for_subtask(subtask: Subtask) -> DatasetGroup {
        DatasetGroup::ALL
            .into_iter()
            .find(|g| g.serves().contains(&subtask))
            .expect("every subtask is served by exactly one group")
    }
}

impl fmt::Display for DatasetGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for DatasetGroup {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DatasetGroup::ALL
            .into_iter()
            .find(|g| g.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CorpusError::UnknownGroup(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "valid" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Laptop,
    Restaurant,
}

/// A dataset within a group, e.g. `D20/R15`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DatasetKey {
    pub group: DatasetGroup,
    pub name: String,
}

impl DatasetKey {
    pub fn new(group: DatasetGroup, name: impl Into<String>) -> Self {
        Self { group, name: name.into() }
    }

    pub fn domain(&self) -> Option<Domain> {
        match self.name.chars().next() {
            Some('L') | Some('l') => Some(Domain::Laptop),
            Some('R') | Some('r') => Some(Domain::Restaurant),
            _ => None,
        }
    }

    /// Whether this is one of the thirteen catalogued datasets.
    pub fn is_catalogued(&self) -> bool {
        self.group.dataset_names().contains(&self.name.as_str())
    }
}

impl fmt::Display for DatasetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.group, self.name)
    }
}

impl FromStr for DatasetKey {
    type Err = CorpusError;

    /// Accepts `D20/R15`, `D20-R15` or `D20:R15`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().splitn(2, ['/', '-', ':']);
        let group = parts.next().unwrap_or_default();
        let name = parts.next().ok_or_else(|| CorpusError::UnknownDataset(s.to_string()))?;
        let group: DatasetGroup = group.parse()?;
        let name = name.trim().to_ascii_uppercase();
        if name.is_empty() {
            return Err(CorpusError::UnknownDataset(s.to_string()));
        }
        Ok(DatasetKey { group, name })
    }
}

/// Up to four sentiment elements. Which fields are populated is dictated by
/// the owning subtask's schema.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SentimentTuple {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opinion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Polarity>,
}

impl SentimentTuple {
    pub fn aste(aspect: &str, opinion: &str, polarity: Polarity) -> Self {
        Self {
            aspect: Some(aspect.to_string()),
            opinion: Some(opinion.to_string()),
            polarity: Some(polarity),
            ..Self::default()
        }
    }

    pub fn asqp(aspect: &str, category: &str, opinion: &str, polarity: Polarity) -> Self {
        Self {
            aspect: Some(aspect.to_string()),
            category: Some(category.to_string()),
            opinion: Some(opinion.to_string()),
            polarity: Some(polarity),
        }
    }

    /// Builds a tuple from string values laid out as `elements`. Polarity is
    /// parsed strictly.
    pub fn from_fields<S: AsRef<str>>(elements: &[Element], values: &[S]) -> Result<Self, CorpusError> {
        if elements.len() != values.len() {
            return Err(CorpusError::Arity { expected: elements.len(), found: values.len() });
        }
        let mut tuple = SentimentTuple::default();
        for (element, value) in elements.iter().zip(values) {
            let value = value.as_ref();
            match element {
                Element::Polarity => tuple.polarity = Some(value.parse()?),
                span => {
                    if value.trim().is_empty() {
                        return Err(CorpusError::EmptySpan(*span));
                    }
                    let slot = match span {
                        Element::Aspect => &mut tuple.aspect,
                        Element::Category => &mut tuple.category,
                        _ => &mut tuple.opinion,
                    };
                    *slot = Some(value.to_string());
                }
            }
        }
        Ok(tuple)
    }

    pub fn get(&self, element: Element) -> Option<&str> {
        match element {
            Element::Aspect => self.aspect.as_deref(),
            Element::Category => self.category.as_deref(),
            Element::Opinion => self.opinion.as_deref(),
            Element::Polarity => self.polarity.map(Polarity::as_str),
        }
    }

    /// Values in `elements` order. Missing elements render as empty strings.
    pub fn fields(&self, elements: &[Element]) -> Vec<String> {
        elements.iter().map(|&e| self.get(e).unwrap_or_default().to_string()).collect()
    }

    /// True when exactly the listed elements are present and every span is
    /// non-blank.
    pub fn conforms(&self, elements: &[Element]) -> bool {
        [Element::Aspect, Element::Category, Element::Opinion, Element::Polarity].into_iter().all(|e| {
            match self.get(e) {
                Some(v) => elements.contains(&e) && !v.trim().is_empty(),
                None => !elements.contains(&e),
            }
        })
    }

    /// Keeps only the listed elements.
    pub fn project(&self, elements: &[Element]) -> SentimentTuple {
        let keep = |e: Element| elements.contains(&e);
        SentimentTuple {
            aspect: self.aspect.clone().filter(|_| keep(Element::Aspect)),
            category: self.category.clone().filter(|_| keep(Element::Category)),
            opinion: self.opinion.clone().filter(|_| keep(Element::Opinion)),
            polarity: self.polarity.filter(|_| keep(Element::Polarity)),
        }
    }
}

/// A sentence with its gold tuples for one subtask.
///
/// For aspect-conditioned subtasks an example is either a *query*
/// (`given_aspect` set, gold in the output schema) or a *sentence-level
/// record* (no aspect, gold carries the aspect in front) that
/// [`super::expand_aspect_conditioned`] turns into queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub subtask: Subtask,
    pub sentence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub given_aspect: Option<String>,
    pub gold: Vec<SentimentTuple>,
}

impl Example {
    /// Whether this example can be rendered as a tested sample.
    pub fn is_query(&self) -> bool {
        self.subtask.aspect_conditioned() == self.given_aspect.is_some()
    }

    /// Element layout the gold tuples must follow.
    pub fn gold_elements(&self) -> &'static [Element] {
        if self.subtask.aspect_conditioned() && self.given_aspect.is_none() {
            self.subtask.sentence_level_elements()
        } else {
            self.subtask.output_elements()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.given_aspect.is_some() && !self.subtask.aspect_conditioned() {
            return Err(CorpusError::Schema {
                id: self.id.clone(),
                message: format!("{} does not take an aspect input", self.subtask),
            });
        }
        if let Some(aspect) = &self.given_aspect {
            if aspect.trim().is_empty() {
                return Err(CorpusError::Schema { id: self.id.clone(), message: "blank aspect".into() });
            }
        }
        let elements = self.gold_elements();
        if let Some(bad) = self.gold.iter().find(|t| !t.conforms(elements)) {
            return Err(CorpusError::Schema {
                id: self.id.clone(),
                message: format!("tuple {:?} does not match {} schema {:?}", bad, self.subtask, elements),
            });
        }
        Ok(())
    }
}

/// An example tagged with the dataset it came from, as used by the
/// multi-task pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedExample {
    pub dataset: DatasetKey,
    pub example: Example,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub key: DatasetKey,
    pub split: Split,
    pub subtask: Subtask,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn domain(&self) -> Option<Domain> {
        self.key.domain()
    }

    pub fn tagged(&self) -> impl Iterator<Item = TaggedExample> + '_ {
        self.examples.iter().map(|e| TaggedExample { dataset: self.key.clone(), example: e.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polarity_is_closed() {
        assert_eq!("positive".parse::<Polarity>().unwrap(), Polarity::Positive);
        assert!("Positive".parse::<Polarity>().is_err());
        assert!("conflict".parse::<Polarity>().is_err());
        assert_eq!(Polarity::from_label("POS"), Some(Polarity::Positive));
        assert_eq!(Polarity::from_label("Negative."), Some(Polarity::Negative));
        assert_eq!(Polarity::from_label("conflict"), None);
    }

    #[test]
    fn subtask_schemas() {
        use Element::*;
        assert_eq!(Subtask::Ae.output_elements(), &[Aspect]);
        assert_eq!(Subtask::Alsc.output_elements(), &[Polarity]);
        assert_eq!(Subtask::Aste.output_elements(), &[Aspect, Opinion, Polarity]);
        assert_eq!(Subtask::Asqp.output_elements(), &[Aspect, Category, Opinion, Polarity]);
        let conditioned: Vec<_> = Subtask::ALL.into_iter().filter(|s| s.aspect_conditioned()).collect();
        assert_eq!(conditioned, vec![Subtask::Alsc, Subtask::Aoe]);
        assert_eq!("aste".parse::<Subtask>().unwrap(), Subtask::Aste);
    }

    #[test]
    fn groups_and_validation_splits() {
        assert!(!DatasetGroup::D17.has_validation());
        assert!(!DatasetGroup::D19.has_validation());
        assert_eq!(DatasetGroup::for_subtask(Subtask::Aoe), DatasetGroup::D19);
        let total: usize = DatasetGroup::ALL.iter().map(|g| g.dataset_names().len()).sum();
        assert_eq!(total, 13);
    }

    #[test]
    fn dataset_key_parsing() {
        let key: DatasetKey = "D20/R15".parse().unwrap();
        assert_eq!(key, DatasetKey::new(DatasetGroup::D20, "R15"));
        assert_eq!("d21-r16".parse::<DatasetKey>().unwrap().to_string(), "D21/R16");
        assert!("D20".parse::<DatasetKey>().is_err());
        assert_eq!(key.domain(), Some(Domain::Restaurant));
    }

    #[test]
    fn tuple_schema_checks() {
        let t = SentimentTuple::aste("burger", "delicious", Polarity::Positive);
        assert!(t.conforms(Subtask::Aste.output_elements()));
        assert!(!t.conforms(Subtask::Aesc.output_elements()));
        assert!(t.project(Subtask::Aesc.output_elements()).conforms(Subtask::Aesc.output_elements()));
        let err = SentimentTuple::from_fields(Subtask::Ae.output_elements(), &["  "]).unwrap_err();
        assert!(matches!(err, CorpusError::EmptySpan(Element::Aspect)));
        let implicit = SentimentTuple::from_fields(Subtask::Ae.output_elements(), &[IMPLICIT]).unwrap();
        assert_eq!(implicit.aspect.as_deref(), Some("NULL"));
    }
}
