//! Time-series load and generation profiles (CSV, kW).

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("cannot read profiles: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed profile CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("profile CSV must start with a `timestep` column")]
    MissingTimestepColumn,
    #[error("duplicate profile key {0}")]
    DuplicateKey(String),
    #[error("row {row}, column {column}: {message}")]
    BadValue {
        row: usize,
        column: String,
        message: String,
    },
    #[error("profile CSV has no timesteps")]
    Empty,
}

/// Column-oriented profile table. Values are kW; negative means net injection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    keys: Vec<String>,
    columns: Vec<Vec<f64>>,
    lookup: HashMap<String, usize>,
    timesteps: usize,
}

impl ProfileSet {
    pub fn new(keys: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self, ProfileError> {
        let timesteps = columns.first().map_or(0, Vec::len);
        if timesteps == 0 {
            return Err(ProfileError::Empty);
        }
        let mut lookup = HashMap::new();
        for (i, key) in keys.iter().enumerate() {
            if lookup.insert(key.clone(), i).is_some() {
                return Err(ProfileError::DuplicateKey(key.clone()));
            }
            let col = &columns[i];
            if col.len() != timesteps {
                return Err(ProfileError::BadValue {
                    row: col.len().min(timesteps),
                    column: key.clone(),
                    message: "column length differs from the others".into(),
                });
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(ProfileError::BadValue {
                    row,
                    column: key.clone(),
                    message: "non-finite value".into(),
                });
            }
        }
        Ok(Self {
            keys,
            columns,
            lookup,
            timesteps,
        })
    }

    /// Every key holds `value` for `timesteps` steps.
    pub fn constant(keys: &[&str], value: f64, timesteps: usize) -> Result<Self, ProfileError> {
        Self::new(
            keys.iter().map(|k| k.to_string()).collect(),
            vec![vec![value; timesteps]; keys.len()],
        )
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn column(&self, key: &str) -> Option<&[f64]> {
        self.lookup.get(key).map(|&i| self.columns[i].as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["timestep".to_string()];
        header.extend(self.keys.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for t in 0..self.timesteps {
            let mut row = vec![t.to_string()];
            row.extend(self.columns.iter().map(|c| c[t].to_string()));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

pub fn load_profiles(path: impl AsRef<Path>) -> Result<ProfileSet, ProfileError> {
    let file = std::fs::File::open(path)?;
    read_profiles(std::io::BufReader::new(file))
}

/// Parses `timestep,<key>,...` rows. The timestep column is positional only.
pub fn read_profiles(reader: impl Read) -> Result<ProfileSet, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("timestep") {
        return Err(ProfileError::MissingTimestepColumn);
    }
    let keys: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut columns = vec![Vec::new(); keys.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (k, key) in keys.iter().enumerate() {
            let raw = record.get(k + 1).unwrap_or("");
            let value: f64 = raw.parse().map_err(|_| ProfileError::BadValue {
                row,
                column: key.clone(),
                message: format!("cannot parse {raw:?} as a number"),
            })?;
            columns[k].push(value);
        }
    }
    if keys.is_empty() {
        return Err(ProfileError::Empty);
    }
    ProfileSet::new(keys, columns)
}

/// kW to per-unit on `base_mva`.
pub fn kw_to_pu(kw: f64, base_mva: f64) -> f64 {
    kw / 1000.0 / base_mva
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_columns() {
        let csv = "timestep,res,com\n0,1.5,-2\n1,2.5,3\n";
        let p = read_profiles(csv.as_bytes()).unwrap();
        assert_eq!(p.timesteps(), 2);
        assert_eq!(p.column("com").unwrap(), &[-2.0, 3.0]);
        assert!(p.column("pv").is_none());
        let again = read_profiles(p.to_csv().as_bytes()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn rejects_bad_header_and_values() {
        assert!(matches!(
            read_profiles("time,res\n0,1\n".as_bytes()),
            Err(ProfileError::MissingTimestepColumn)
        ));
        assert!(matches!(
            read_profiles("timestep,res\n0,abc\n".as_bytes()),
            Err(ProfileError::BadValue { .. })
        ));
        assert!(matches!(
            read_profiles("timestep,res\n".as_bytes()),
            Err(ProfileError::Empty)
        ));
    }

    #[test]
    fn kw_conversion() {
        assert_eq!(kw_to_pu(500.0, 1.0), 0.5);
        assert_eq!(kw_to_pu(500.0, 10.0), 0.05);
    }
}
