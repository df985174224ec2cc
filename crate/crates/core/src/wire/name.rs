use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use super::WireError;

pub const MAX_LABEL_LEN: usize = 63;
pub const MAX_NAME_LEN: usize = 255;

/// A domain name as a sequence of labels, stored byte-for-byte.
///
/// Case is never normalised. `==` is case-exact; use [`DnsName::eq_ignore_case`]
/// or [`NameKey`] for DNS semantics. The root name has no labels.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct DnsName {
    labels: Vec<Vec<u8>>,
}

impl DnsName {
    pub fn root() -> Self {
        DnsName { labels: Vec::new() }
    }

    pub fn from_labels<I, L>(labels: I) -> Result<Self, WireError>
    where
        I: IntoIterator<Item = L>,
        L: Into<Vec<u8>>,
    {
        let name = DnsName {
            labels: labels.into_iter().map(Into::into).collect(),
        };
        name.check()?;
        Ok(name)
    }

    fn check(&self) -> Result<(), WireError> {
        for label in &self.labels {
            if label.is_empty() {
                return Err(WireError::EmptyLabel);
            }
            if label.len() > MAX_LABEL_LEN {
                return Err(WireError::LabelTooLong(label.len()));
            }
        }
        if self.wire_len() > MAX_NAME_LEN {
            return Err(WireError::NameTooLong(self.wire_len()));
        }
        Ok(())
    }

    pub fn labels(&self) -> impl ExactSizeIterator<Item = &[u8]> + DoubleEndedIterator {
        self.labels.iter().map(Vec::as_slice)
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub fn is_root(&self) -> bool {
        self.labels.is_empty()
    }

    /// Length of the uncompressed wire encoding, including the terminating zero octet.
    pub fn wire_len(&self) -> usize {
        self.labels.iter().map(|l| l.len() + 1).sum::<usize>() + 1
    }

    /// Number of ASCII letters across all labels.
    pub fn letter_count(&self) -> usize {
        self.bytes().filter(u8::is_ascii_alphabetic).count()
    }

    fn bytes(&self) -> impl Iterator<Item = u8> + '_ {
        self.labels.iter().flat_map(|l| l.iter().copied())
    }

    pub fn eq_ignore_case(&self, other: &DnsName) -> bool {
        self.labels.len() == other.labels.len()
            && self
                .labels
                .iter()
                .zip(&other.labels)
                .all(|(a, b)| a.eq_ignore_ascii_case(b))
    }

    pub fn to_lowercase(&self) -> DnsName {
        DnsName {
            labels: self.labels.iter().map(|l| l.to_ascii_lowercase()).collect(),
        }
    }

    /// The name without its leftmost label. The root is its own parent.
    pub fn parent(&self) -> DnsName {
        DnsName {
            labels: self.labels.iter().skip(1).cloned().collect(),
        }
    }

    /// `true` when `self` equals `zone` or lies beneath it, ignoring case.
    pub fn is_within(&self, zone: &DnsName) -> bool {
        if zone.labels.len() > self.labels.len() {
            return false;
        }
        let skip = self.labels.len() - zone.labels.len();
        self.labels[skip..]
            .iter()
            .zip(&zone.labels)
            .all(|(a, b)| a.eq_ignore_ascii_case(b))
    }

    /// Prepends `label` as the new leftmost label.
    pub fn prepend(&self, label: impl Into<Vec<u8>>) -> Result<DnsName, WireError> {
        let mut labels = Vec::with_capacity(self.labels.len() + 1);
        labels.push(label.into());
        labels.extend(self.labels.iter().cloned());
        DnsName::from_labels(labels)
    }

    /// Rebuilds the name with every byte passed through `f`. Label structure is kept.
    pub(crate) fn map_bytes(&self, mut f: impl FnMut(u8) -> u8) -> DnsName {
        DnsName {
            labels: self
                .labels
                .iter()
                .map(|l| l.iter().map(|&b| f(b)).collect())
                .collect(),
        }
    }
}

impl FromStr for DnsName {
    type Err = WireError;

    /// Parses dotted presentation form. A single trailing dot is accepted; `"."` and
    /// `""` are the root. Escapes are not supported.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_suffix('.').unwrap_or(s);
        if s.is_empty() {
            return Ok(DnsName::root());
        }
        DnsName::from_labels(s.split('.').map(|l| l.as_bytes().to_vec()))
    }
}

impl fmt::Display for DnsName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.labels.is_empty() {
            return f.write_str(".");
        }
        for (i, label) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            for &b in label {
                if b.is_ascii_graphic() && b != b'.' && b != b'\\' {
                    write!(f, "{}", b as char)?;
                } else {
                    write!(f, "\\{:03}", b)?;
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for DnsName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DnsName({self})")
    }
}

/// Case-folded view of a name, for map keys.
#[derive(Clone, Debug)]
pub struct NameKey(DnsName);

impl NameKey {
    pub fn new(name: &DnsName) -> Self {
        NameKey(name.to_lowercase())
    }

    pub fn name(&self) -> &DnsName {
        &self.0
    }
}

impl PartialEq for NameKey {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

impl Eq for NameKey {}

impl Hash for NameKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash(state)
    }
}

impl fmt::Display for NameKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}
