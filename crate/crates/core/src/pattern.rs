use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dex::MethodRef;
use crate::program::Program;

/// Matches method references by class, name and parameter list. `*`
/// matches any class or name; a missing parameter list matches any.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MethodPattern {
    pub class: String,
    pub name: String,
    /// Parenthesized parameter descriptors, e.g. `(Ljava/lang/String;I)`.
    pub params: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad method pattern {0:?}")]
pub struct PatternError(pub String);

impl MethodPattern {
    pub fn new(class: &str, name: &str, params: Option<&str>) -> Result<MethodPattern, PatternError> {
        let shown = || format!("{class} {name} {}", params.unwrap_or("*"));
        if class != "*" && !(class.starts_with('L') && class.ends_with(';')) {
            return Err(PatternError(shown()));
        }
        if name.is_empty() {
            return Err(PatternError(shown()));
        }
        let params = match params {
            None | Some("*") => None,
            Some(p) if p.starts_with('(') && p.ends_with(')') => Some(p.to_string()),
            Some(p) => Some(format!("({p})")),
        };
        Ok(MethodPattern {
            class: class.to_string(),
            name: name.to_string(),
            params,
        })
    }

    /// Whether `m` matches, treating program subclasses of the pattern class
    /// as matches too.
    pub fn matches(&self, m: &MethodRef, program: Option<&Program>) -> bool {
        if self.name != "*" && self.name != m.name {
            return false;
        }
        if let Some(p) = &self.params {
            if *p != format!("({})", m.proto.parameters.concat()) {
                return false;
            }
        }
        self.class == "*"
            || self.class == m.class
            || program.is_some_and(|p| p.supertypes(&m.class).contains(&self.class))
    }
}

impl fmt::Display for MethodPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.class, self.name)?;
        if let Some(p) = &self.params {
            f.write_str(p)?;
        }
        Ok(())
    }
}

impl FromStr for MethodPattern {
    type Err = PatternError;

    /// Parses `Lcls;->name` or `Lcls;->name(params)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (class, rest) = s.split_once("->").ok_or_else(|| PatternError(s.to_string()))?;
        match rest.find('(') {
            Some(i) => MethodPattern::new(class.trim(), &rest[..i], Some(&rest[i..])),
            None => MethodPattern::new(class.trim(), rest.trim(), None),
        }
    }
}

impl Serialize for MethodPattern {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodPattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dex::Prototype;

    fn mref(class: &str, name: &str, params: &[&str]) -> MethodRef {
        MethodRef {
            class: class.into(),
            name: name.into(),
            proto: Prototype {
                shorty: String::new(),
                return_type: "V".into(),
                parameters: params.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    #[test]
    fn parse_and_match() {
        let p: MethodPattern = "Landroid/util/Log;->v(Ljava/lang/String;Ljava/lang/String;)".parse().unwrap();
        assert!(p.matches(&mref("Landroid/util/Log;", "v", &["Ljava/lang/String;", "Ljava/lang/String;"]), None));
        assert!(!p.matches(&mref("Landroid/util/Log;", "v", &["Ljava/lang/String;"]), None));
        let any: MethodPattern = "*->hashCode".parse().unwrap();
        assert!(any.matches(&mref("LFoo;", "hashCode", &[]), None));
        assert_eq!(any.to_string(), "*->hashCode");
        assert!("Log->v".parse::<MethodPattern>().is_err());
        assert!("nonsense".parse::<MethodPattern>().is_err());
    }
}
