//! Minimal flag parser: `--key value`, `--key=value`, and boolean `--flag`.

use std::collections::BTreeMap;

/// Parsed command-line flags. Keys are stored without the leading dashes,
/// with `-` replaced by `_` so they line up with config keys.
#[derive(Debug, Default)]
pub struct Args {
    values: BTreeMap<String, String>,
    flags: Vec<String>,
}

/// Flags that take no value.
const BOOLEAN_FLAGS: &[&str] = &[
    "no_link_pred",
    "no_entropy",
    "det_pool",
    "flat_baseline",
    "soft",
    "inject_fault",
];

impl Args {
    pub fn parse(argv: &[String]) -> Result<Args, String> {
        let mut args = Args::default();
        let mut i = 0;
        while i < argv.len() {
            let token = &argv[i];
            let Some(stripped) = token.strip_prefix("--") else {
                return Err(format!("unexpected argument {token:?}"));
            };
            let (raw_key, inline_value) = match stripped.split_once('=') {
                Some((k, v)) => (k, Some(v.to_string())),
                None => (stripped, None),
            };
            let key = raw_key.replace('-', "_");
            if BOOLEAN_FLAGS.contains(&key.as_str()) {
                if let Some(v) = inline_value {
                    return Err(format!("flag --{raw_key} takes no value, got {v:?}"));
                }
                args.flags.push(key);
                i += 1;
                continue;
            }
            let value = match inline_value {
                Some(v) => v,
                None => {
                    i += 1;
                    argv.get(i)
                        .cloned()
                        .ok_or_else(|| format!("flag --{raw_key} expects a value"))?
                }
            };
            if args.values.insert(key.clone(), value).is_some() {
                return Err(format!("flag --{raw_key} given twice"));
            }
            i += 1;
        }
        Ok(args)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, String> {
        self.get(key)
            .ok_or_else(|| format!("missing required flag --{}", key.replace('_', "-")))
    }

    pub fn has_flag(&self, key: &str) -> bool {
        self.flags.iter().any(|f| f == key)
    }

    /// All `--key value` pairs, for generic config overrides.
    pub fn values(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}
