//! Event ontology and the dynamic-template registry.
//!
//! A registry maps every `(event type, target role)` pair to an ordered list of
//! question templates. Each template is parameterized by a subset of the *other*
//! roles of the event type; those roles appear in the question text as
//! `[Role]` placeholders. The first template of every entry is the base
//! template, which has no placeholders at all.
//!
//! The registry ships as a JSON data file (see `docs/registry_format.md`):
//!
//! ```json
//! {
//!   "version": 1,
//!   "event_types": [{ "name": "Conflict.Attack", "roles": ["Attacker", "Target", "Instrument", "Place"] }],
//!   "templates": [
//!     { "event_type": "Conflict.Attack", "target_role": "Attacker", "slots": [], "text": "Who was the attacking agent?" }
//!   ]
//! }
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// The canonical registry transcribed from the ACE template tables.
pub const ACE_REGISTRY_JSON: &str = include_str!("../data/ace_templates.json");

pub const REGISTRY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("failed to read registry {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed registry file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported registry format version {0}")]
    Version(u32),
    #[error("invalid template ({event_type}, {role}, #{index}): {reason}")]
    InvalidTemplate {
        event_type: String,
        role: String,
        index: usize,
        reason: String,
    },
    #[error("invalid registry entry ({event_type}, {role}): {reason}")]
    InvalidEntry {
        event_type: String,
        role: String,
        reason: String,
    },
    #[error("invalid event type {event_type}: {reason}")]
    InvalidEventType { event_type: String, reason: String },
    #[error("unknown event type {0}")]
    UnknownEventType(String),
    #[error("no templates for role {role} of event type {event_type}")]
    UnknownRole { event_type: String, role: String },
}

/// An event type and its argument-role inventory, in source order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTypeDef {
    pub name: String,
    pub roles: Vec<String>,
}

impl EventTypeDef {
    pub fn has_role(&self, role: &str) -> bool {
        self.roles.iter().any(|r| r == role)
    }
}

/// A piece of template text: literal characters or a `[Role]` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Slot(String),
}

/// Splits template text into literal runs and placeholders.
///
/// Every `[...]` pair is a placeholder; an unmatched `[` or `]` is kept as a
/// literal.
pub fn parse_segments(text: &str) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let Some(close) = rest[open..].find(']').map(|c| open + c) else {
            break;
        };
        if open > 0 {
            segments.push(Segment::Literal(rest[..open].to_string()));
        }
        segments.push(Segment::Slot(rest[open + 1..close].to_string()));
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        segments.push(Segment::Literal(rest.to_string()));
    }
    segments
}

/// Inverse of [`parse_segments`].
pub fn render_segments(segments: &[Segment]) -> String {
    let mut out = String::new();
    for segment in segments {
        match segment {
            Segment::Literal(s) => out.push_str(s),
            Segment::Slot(role) => {
                out.push('[');
                out.push_str(role);
                out.push(']');
            }
        }
    }
    out
}

/// A question template for one `(event type, target role)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicTemplate {
    pub event_type: String,
    pub target_role: String,
    #[serde(rename = "slots")]
    pub slot_roles: Vec<String>,
    pub text: String,
}

impl DynamicTemplate {
    pub fn is_base(&self) -> bool {
        self.slot_roles.is_empty()
    }

    pub fn segments(&self) -> Vec<Segment> {
        parse_segments(&self.text)
    }

    pub fn slot_set(&self) -> BTreeSet<&str> {
        self.slot_roles.iter().map(String::as_str).collect()
    }

    /// Replaces each placeholder with the string returned by `fill`.
    ///
    /// Returns the role of the first placeholder for which `fill` gives `None`.
    pub fn render_with<'a, F>(&self, mut fill: F) -> Result<String, String>
    where
        F: FnMut(&str) -> Option<&'a str>,
    {
        let mut out = String::with_capacity(self.text.len());
        for segment in self.segments() {
            match segment {
                Segment::Literal(s) => out.push_str(&s),
                Segment::Slot(role) => match fill(&role) {
                    Some(value) => out.push_str(value),
                    None => return Err(role),
                },
            }
        }
        Ok(out)
    }

    fn check(&self, def: &EventTypeDef) -> Result<(), String> {
        if !self.text.ends_with('?') {
            return Err("text does not end with '?'".into());
        }
        if self.slot_roles.iter().any(|r| r == &self.target_role) {
            return Err("target role appears among its own slots".into());
        }
        let mut seen = HashSet::new();
        for role in &self.slot_roles {
            if !seen.insert(role.as_str()) {
                return Err(format!("slot role {role} listed twice"));
            }
            if !def.has_role(role) {
                return Err(format!("slot role {role} is not a role of {}", def.name));
            }
        }
        let placeholders: Vec<String> = self
            .segments()
            .into_iter()
            .filter_map(|s| match s {
                Segment::Slot(role) => Some(role),
                Segment::Literal(_) => None,
            })
            .collect();
        for role in &self.slot_roles {
            let n = placeholders.iter().filter(|p| *p == role).count();
            if n != 1 {
                return Err(format!("placeholder [{role}] occurs {n} times, expected once"));
            }
        }
        if let Some(extra) = placeholders.iter().find(|p| !seen.contains(p.as_str())) {
            return Err(format!("placeholder [{extra}] is not a declared slot"));
        }
        Ok(())
    }
}

/// Stored vs expected template count for one registry entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TemplateCount {
    /// `2^k`, where `k` is the number of other roles used as a slot anywhere in the entry.
    pub expected: u64,
    pub stored: usize,
    /// `2^n`, where `n` is the number of other roles in the event type's inventory.
    pub full: u64,
    /// True when the entry is not the full powerset over the event type's other roles.
    pub reduced: bool,
}

impl TemplateCount {
    /// The entry's slot sets are exactly all subsets of the slotted roles.
    pub fn is_complete(&self) -> bool {
        self.stored as u64 == self.expected
    }
}

#[derive(Deserialize)]
struct RegistryFile {
    version: u32,
    event_types: Vec<EventTypeDef>,
    templates: Vec<DynamicTemplate>,
}

#[derive(Serialize)]
struct RegistryFileRef<'a> {
    version: u32,
    event_types: Vec<&'a EventTypeDef>,
    templates: Vec<&'a DynamicTemplate>,
}

/// Validated, immutable template registry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRegistry {
    event_types: IndexMap<String, EventTypeDef>,
    entries: IndexMap<(String, String), Vec<DynamicTemplate>>,
}

impl TemplateRegistry {
    /// The registry bundled with the crate.
    pub fn ace() -> Self {
        Self::from_json(ACE_REGISTRY_JSON).expect("bundled registry is valid")
    }

    pub fn from_json(json: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = serde_json::from_str(json)?;
        if file.version != REGISTRY_FORMAT_VERSION {
            return Err(RegistryError::Version(file.version));
        }
        Self::build(file.event_types, file.templates)
    }

    pub fn to_json(&self) -> String {
        let file = RegistryFileRef {
            version: REGISTRY_FORMAT_VERSION,
            event_types: self.event_types.values().collect(),
            templates: self.entries.values().flatten().collect(),
        };
        serde_json::to_string_pretty(&file).expect("registry serializes")
    }

    /// Builds and validates a registry from event types and a flat template list.
    ///
    /// Templates of one entry keep their relative order; entries are ordered by
    /// first appearance.
    pub fn build(
        event_types: Vec<EventTypeDef>,
        templates: Vec<DynamicTemplate>,
    ) -> Result<Self, RegistryError> {
        let mut types = IndexMap::new();
        for def in event_types {
            let mut seen = HashSet::new();
            if let Some(dup) = def.roles.iter().find(|r| !seen.insert(r.as_str())) {
                return Err(RegistryError::InvalidEventType {
                    event_type: def.name.clone(),
                    reason: format!("role {dup} listed twice"),
                });
            }
            if types.contains_key(&def.name) {
                return Err(RegistryError::InvalidEventType {
                    event_type: def.name.clone(),
                    reason: "declared twice".into(),
                });
            }
            types.insert(def.name.clone(), def);
        }

        let mut entries: IndexMap<(String, String), Vec<DynamicTemplate>> = IndexMap::new();
        for template in templates {
            let key = (template.event_type.clone(), template.target_role.clone());
            entries.entry(key).or_default().push(template);
        }

        for ((event_type, role), list) in &entries {
            let def = types
                .get(event_type)
                .ok_or_else(|| RegistryError::UnknownEventType(event_type.clone()))?;
            if !def.has_role(role) {
                return Err(RegistryError::InvalidEntry {
                    event_type: event_type.clone(),
                    role: role.clone(),
                    reason: format!("{role} is not a role of {event_type}"),
                });
            }
            let mut slot_sets = HashSet::new();
            for (index, template) in list.iter().enumerate() {
                let invalid = |reason: String| RegistryError::InvalidTemplate {
                    event_type: event_type.clone(),
                    role: role.clone(),
                    index,
                    reason,
                };
                template.check(def).map_err(invalid)?;
                if index == 0 && !template.is_base() {
                    return Err(invalid("first template of an entry must be the base template".into()));
                }
                if index > 0 && template.is_base() {
                    return Err(invalid("duplicate base template".into()));
                }
                if !slot_sets.insert(template.slot_set()) {
                    return Err(invalid("slot-role set repeats an earlier template".into()));
                }
            }
        }

        Ok(Self {
            event_types: types,
            entries,
        })
    }

    pub fn event_type(&self, name: &str) -> Option<&EventTypeDef> {
        self.event_types.get(name)
    }

    pub fn event_types(&self) -> impl Iterator<Item = &EventTypeDef> {
        self.event_types.values()
    }

    /// All `(event type, role)` keys in source order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &[DynamicTemplate])> {
        self.entries
            .iter()
            .map(|((e, r), list)| (e.as_str(), r.as_str(), list.as_slice()))
    }

    pub fn has_entry(&self, event_type: &str, role: &str) -> bool {
        self.entries
            .contains_key(&(event_type.to_string(), role.to_string()))
    }

    /// Roles of `event_type` that have templates, in inventory order.
    pub fn queryable_roles<'a>(&'a self, event_type: &str) -> Option<Vec<&'a str>> {
        let def = self.event_types.get(event_type)?;
        Some(
            def.roles
                .iter()
                .filter(|r| self.has_entry(event_type, r))
                .map(String::as_str)
                .collect(),
        )
    }

    pub fn templates_for(
        &self,
        event_type: &str,
        role: &str,
    ) -> Result<&[DynamicTemplate], RegistryError> {
        if !self.event_types.contains_key(event_type) {
            return Err(RegistryError::UnknownEventType(event_type.to_string()));
        }
        self.entries
            .get(&(event_type.to_string(), role.to_string()))
            .map(Vec::as_slice)
            .ok_or_else(|| RegistryError::UnknownRole {
                event_type: event_type.to_string(),
                role: role.to_string(),
            })
    }

    pub fn expected_template_count(
        &self,
        event_type: &str,
        role: &str,
    ) -> Result<TemplateCount, RegistryError> {
        let templates = self.templates_for(event_type, role)?;
        let def = &self.event_types[event_type];
        let slotted: BTreeSet<&str> = templates
            .iter()
            .flat_map(|t| t.slot_roles.iter().map(String::as_str))
            .collect();
        let others = def.roles.iter().filter(|r| *r != role).count();
        let expected = 1u64 << slotted.len();
        let full = 1u64 << others;
        Ok(TemplateCount {
            expected,
            stored: templates.len(),
            full,
            reduced: templates.len() as u64 != full,
        })
    }

    pub fn template_count(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }
}

/// Reads and validates a registry file.
pub fn load_registry(path: impl AsRef<Path>) -> Result<TemplateRegistry, RegistryError> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    TemplateRegistry::from_json(&json)
}

impl fmt::Display for DynamicTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}
