//! Plain-array serde layout for nalgebra types: vectors as `[x0, x1, ...]`,
//! matrices as a list of rows.

use nalgebra::{DMatrix, DVector, Scalar as NaScalar};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub mod vector {
    use super::*;

    pub fn serialize<T: NaScalar + Serialize, S: Serializer>(v: &DVector<T>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<DVector<T>, D::Error>
    where
        T: NaScalar + Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Ok(DVector::from_vec(Vec::<T>::deserialize(d)?))
    }
}

pub mod option_vector {
    use super::*;

    pub fn serialize<T: NaScalar + Serialize, S: Serializer>(
        v: &Option<DVector<T>>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|v| v.as_slice()).serialize(s)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<Option<DVector<T>>, D::Error>
    where
        T: NaScalar + Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Ok(Option::<Vec<T>>::deserialize(d)?.map(DVector::from_vec))
    }
}

pub mod matrix {
    use super::*;

    pub fn serialize<T: NaScalar + Serialize, S: Serializer>(m: &DMatrix<T>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<T>> = m
            .row_iter()
            .map(|r| r.iter().cloned().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<DMatrix<T>, D::Error>
    where
        T: NaScalar + Deserialize<'de>,
        D: Deserializer<'de>,
    {
        let rows = Vec::<Vec<T>>::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("matrix rows have different lengths"));
        }
        let nrows = rows.len();
        Ok(DMatrix::from_row_iterator(nrows, ncols, rows.into_iter().flatten()))
    }
}
