use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Parameter initialization schemes.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    /// Glorot/Xavier uniform over `(fan_in, fan_out) = (rows, cols)`.
    XavierUniform,
    Normal(f64),
}

/// Named parameters plus the AdamW moment buffers and step counter.
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor2<T>>,
    pub(crate) first_moments: Vec<Tensor2<T>>,
    pub(crate) second_moments: Vec<Tensor2<T>>,
    pub(crate) step: u64,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            first_moments: Vec::new(),
            second_moments: Vec::new(),
            step: 0,
        }
    }

    /// Registers a parameter. Panics on duplicate names.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor2<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.iter().any(|n| *n == name),
            "duplicate parameter name `{name}`"
        );
        let (r, c) = value.shape();
        self.names.push(name);
        self.values.push(value);
        self.first_moments.push(Tensor2::zeros(r, c));
        self.second_moments.push(Tensor2::zeros(r, c));
        ParamId(self.values.len() - 1)
    }

    pub fn add_init<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        let t = match init {
            Init::Zeros => Tensor2::zeros(rows, cols),
            Init::Ones => Tensor2::filled(rows, cols, T::one()),
            Init::XavierUniform => {
                let a = (6.0 / (rows + cols).max(1) as f64).sqrt();
                let d = Uniform::new_inclusive(-a, a).expect("valid range");
                Tensor2::from_vec(
                    rows,
                    cols,
                    (0..rows * cols).map(|_| T::of(d.sample(rng))).collect(),
                )
            }
            Init::Normal(std) => {
                let d = Normal::new(0.0, std).expect("valid std");
                Tensor2::from_vec(
                    rows,
                    cols,
                    (0..rows * cols).map(|_| T::of(d.sample(rng))).collect(),
                )
            }
        };
        self.add(name, t)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor2<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2<T> {
        &mut self.values[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.data().len()).sum()
    }

    pub fn moments(&self, id: ParamId) -> (&Tensor2<T>, &Tensor2<T>) {
        (&self.first_moments[id.0], &self.second_moments[id.0])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Tensor2::is_finite)
    }

    /// Copies values (not moments) from another store with identical layout.
    pub fn copy_values_from(&mut self, other: &Self) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let j = other
                .find(name)
                .ok_or_else(|| NnError::UnknownParam(name.clone()))?;
            let src = other.get(j);
            if src.shape() != self.values[i].shape() {
                return Err(NnError::ShapeMismatch {
                    name: name.clone(),
                    expected: self.values[i].shape(),
                    found: src.shape(),
                });
            }
            self.values[i] = src.clone();
        }
        Ok(())
    }

    /// Converts every buffer to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor2::cast).collect(),
            first_moments: self.first_moments.iter().map(Tensor2::cast).collect(),
            second_moments: self.second_moments.iter().map(Tensor2::cast).collect(),
            step: self.step,
        }
    }

    pub(crate) fn restore_moments(
        &mut self,
        step: u64,
        first: Vec<Tensor2<T>>,
        second: Vec<Tensor2<T>>,
    ) {
        self.step = step;
        self.first_moments = first;
        self.second_moments = second;
    }
}

/// Gradients indexed by [`ParamId`]; `None` for parameters the loss does not
/// touch.
#[derive(Clone, Debug)]
pub struct ParamGrads<T> {
    pub(crate) grads: Vec<Option<Tensor2<T>>>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self {
            grads: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor2<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: Tensor2<T>) {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        match &mut self.grads[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Adds another gradient set (fixed order: `self` then `other`).
    pub fn merge(&mut self, other: &Self) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g.clone());
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for g in self.grads.iter_mut().flatten() {
            g.scale(s);
        }
    }

    pub fn global_norm(&self) -> T {
        self.grads
            .iter()
            .flatten()
            .flat_map(|g| g.data().iter())
            .map(|v| *v * *v)
            .sum::<T>()
            .sqrt()
    }
}
