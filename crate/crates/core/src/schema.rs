//! Feature coordinate system.
//!
//! A schema is an ordered list of `<Category>:<Name>` features. The position
//! of a feature in the list is its index in every vector, model and rank
//! file built against the schema, and the SHA-256 of the ordered qualified
//! names is the schema's fingerprint.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const DEFAULT_SCHEMA: &str = include_str!("../data/default_schema.txt");

/// Number of features in the bundled schema.
pub const DEFAULT_SCHEMA_SIZE: usize = 694;

/// Benign features highlighted by explanation ranking on a real corpus,
/// most frequent first. All of them are present in the bundled schema.
pub const REFERENCE_BENIGN_FEATURES: [&str; 20] = [
    "Class:java.lang.ClassLoader",
    "Class:android.content.ContentResolver",
    "Class:android.content.ContentProvider",
    "Class:android.net.ConnectivityManager",
    "Class:android.telephony.TelephonyManager",
    "Intent:action.BATTERY_CHANGED",
    "Intent:action.PACKAGE_REPLACED",
    "Intent:extra.CONTENT_ANNOTATIONS",
    "Intent:action.ACTION_SHUTDOWN",
    "Class:android.content.pm.PackageInstaller",
    "Class:android.net.http.SslCertificate",
    "Permission:MANAGE_OWN_CALLS",
    "Package:org.apache.http.params",
    "Permission:CAMERA",
    "Intent:action.SEARCH",
    "Intent:action.ACTION_POWER_CONNECTED",
    "Permission:CALL_PHONE",
    "Intent:action.EDIT",
    "Intent:category.MONKEY",
    "Intent:action.MANAGED_PROFILE_UNLOCKED",
];

/// Static-analysis feature family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Permission,
    Package,
    Hardware,
    Intent,
    Class,
    Leak,
    /// Analysis-derived flags (obfuscation, suspicious behaviour).
    Behavior,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Permission,
        Category::Package,
        Category::Hardware,
        Category::Intent,
        Category::Class,
        Category::Leak,
        Category::Behavior,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Permission => "Permission",
            Category::Package => "Package",
            Category::Hardware => "Hardware",
            Category::Intent => "Intent",
            Category::Class => "Class",
            Category::Leak => "Leak",
            Category::Behavior => "Behavior",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureDescriptor {
    pub name: String,
    pub category: Category,
    pub index: usize,
}

impl FeatureDescriptor {
    /// `<Category>:<Name>`, the form used in schema and rank files.
    pub fn qualified_name(&self) -> String {
        format!("{}:{}", self.category, self.name)
    }
}

/// Ordered, fingerprinted feature list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    features: Vec<FeatureDescriptor>,
    fingerprint: String,
}

impl FeatureSchema {
    /// Builds a schema from `(category, name)` pairs in index order.
    pub fn new<I, S>(features: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Category, S)>,
        S: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (index, (category, name)) in features.into_iter().enumerate() {
            let name = name.into();
            if name.is_empty() {
                return Err(Error::Schema {
                    line: index + 1,
                    message: "empty feature name".into(),
                });
            }
            let descriptor = FeatureDescriptor {
                name,
                category,
                index,
            };
            if !seen.insert(descriptor.qualified_name()) {
                return Err(Error::Schema {
                    line: index + 1,
                    message: format!("duplicate feature `{}`", descriptor.qualified_name()),
                });
            }
            out.push(descriptor);
        }
        if out.is_empty() {
            return Err(Error::EmptySchema);
        }
        let fingerprint = fingerprint_of(&out);
        Ok(FeatureSchema {
            features: out,
            fingerprint,
        })
    }

    /// Parses schema text: one `<Category>:<Name>` per line, blank lines ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut features = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Schema {
                line: lineno + 1,
                message,
            };
            let (cat, name) = line
                .split_once(':')
                .ok_or_else(|| err(format!("expected `<Category>:<Name>`, got `{line}`")))?;
            let category: Category = cat.trim().parse().map_err(err)?;
            let name = name.trim();
            if name.is_empty() {
                return Err(err("empty feature name".into()));
            }
            if !seen.insert((category, name.to_string())) {
                return Err(err(format!("duplicate feature `{category}:{name}`")));
            }
            features.push(FeatureDescriptor {
                name: name.to_string(),
                category,
                index: features.len(),
            });
        }
        if features.is_empty() {
            return Err(Error::EmptySchema);
        }
        let fingerprint = fingerprint_of(&features);
        Ok(FeatureSchema {
            features,
            fingerprint,
        })
    }

    /// The bundled 694-feature schema.
    pub fn default_schema() -> Self {
        Self::parse(DEFAULT_SCHEMA).expect("bundled schema is well-formed")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.features {
            out.push_str(&f.qualified_name());
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn features(&self) -> &[FeatureDescriptor] {
        &self.features
    }

    pub fn get(&self, index: usize) -> Option<&FeatureDescriptor> {
        self.features.get(index)
    }

    /// Looks a feature up by its qualified name.
    pub fn index_of(&self, qualified: &str) -> Option<usize> {
        let (cat, name) = qualified.split_once(':')?;
        let category: Category = cat.parse().ok()?;
        self.features
            .iter()
            .position(|f| f.category == category && f.name == name)
    }

    pub fn check_fingerprint(&self, other: &str) -> Result<()> {
        if self.fingerprint != other {
            return Err(Error::FingerprintMismatch {
                expected: self.fingerprint.clone(),
                found: other.to_string(),
            });
        }
        Ok(())
    }
}

/// Reads and parses a schema file.
pub fn load_schema(path: impl AsRef<Path>) -> Result<FeatureSchema> {
    let text = std::fs::read_to_string(path)?;
    FeatureSchema::parse(&text)
}

fn fingerprint_of(features: &[FeatureDescriptor]) -> String {
    let mut hasher = Sha256::new();
    for f in features {
        hasher.update(f.qualified_name().as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_schema_has_694_features_in_seven_categories() {
        let schema = FeatureSchema::default_schema();
        assert_eq!(schema.len(), DEFAULT_SCHEMA_SIZE);
        let cats: HashSet<_> = schema.features().iter().map(|f| f.category).collect();
        assert_eq!(cats.len(), 7);
        let behaviour = schema
            .features()
            .iter()
            .filter(|f| f.category == Category::Behavior)
            .count();
        assert_eq!(behaviour, 1);
        for name in REFERENCE_BENIGN_FEATURES {
            assert!(schema.index_of(name).is_some(), "{name} missing");
        }
    }

    #[test]
    fn indices_follow_line_order() {
        let schema = FeatureSchema::parse("Permission:CAMERA\n\nIntent:action.EDIT\n").unwrap();
        assert_eq!(schema.len(), 2);
        assert_eq!(schema.get(1).unwrap().qualified_name(), "Intent:action.EDIT");
        assert_eq!(schema.index_of("Permission:CAMERA"), Some(0));
        assert_eq!(schema.index_of("Permission:NOPE"), None);
    }

    #[test]
    fn duplicate_reports_line_number() {
        let err = FeatureSchema::parse("Permission:CAMERA\nIntent:action.EDIT\nPermission:CAMERA\n")
            .unwrap_err();
        match err {
            Error::Schema { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_category_reports_line_number() {
        let err = FeatureSchema::parse("Permission:CAMERA\nWidget:foo\n").unwrap_err();
        assert!(matches!(err, Error::Schema { line: 2, .. }));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(FeatureSchema::parse(""), Err(Error::EmptySchema)));
        assert!(matches!(FeatureSchema::parse("\n  \n"), Err(Error::EmptySchema)));
    }

    #[test]
    fn fingerprint_depends_on_order() {
        let a = FeatureSchema::parse("Permission:A\nPermission:B\n").unwrap();
        let b = FeatureSchema::parse("Permission:B\nPermission:A\n").unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        let again = FeatureSchema::parse(&a.to_text()).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn new_matches_parse() {
        let built = FeatureSchema::new([(Category::Leak, "imei"), (Category::Class, "x.Y")]).unwrap();
        let parsed = FeatureSchema::parse("Leak:imei\nClass:x.Y").unwrap();
        assert_eq!(built, parsed);
    }
}
