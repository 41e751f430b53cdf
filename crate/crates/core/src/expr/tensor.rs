use nalgebra::{DMatrix, DVector};

/// Dense derivative tensor of a vector-valued map: for each of `components`
/// outputs, an `order`-way array over `dim` inputs.
///
/// Entry `(c, i_1, .., i_k)` lives at `c * dim^k + i_1 * dim^(k-1) + .. + i_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    components: usize,
    dim: usize,
    order: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(components: usize, dim: usize, order: usize) -> Self {
        Self {
            components,
            dim,
            order,
            data: vec![0.0; components * dim.pow(order as u32)],
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn block(&self) -> usize {
        self.dim.pow(self.order as u32)
    }

    fn offset(&self, component: usize, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.order);
        index
            .iter()
            .fold(component, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, component: usize, index: &[usize]) -> f64 {
        self.data[self.offset(component, index)]
    }

    pub fn set(&mut self, component: usize, index: &[usize], value: f64) {
        let at = self.offset(component, index);
        self.data[at] = value;
    }

    /// Contracts the leading slot with `h`, lowering the order by one.
    pub fn contract_once(&self, h: &[f64]) -> Tensor {
        assert!(self.order >= 1, "cannot contract an order-0 tensor");
        assert_eq!(h.len(), self.dim);
        let inner = self.dim.pow(self.order as u32 - 1);
        let mut out = Tensor::zeros(self.components, self.dim, self.order - 1);
        for c in 0..self.components {
            let src = &self.data[c * self.block()..(c + 1) * self.block()];
            let dst = &mut out.data[c * inner..(c + 1) * inner];
            for (i, &hi) in h.iter().enumerate() {
                if hi == 0.0 {
                    continue;
                }
                for (d, s) in dst.iter_mut().zip(&src[i * inner..(i + 1) * inner]) {
                    *d += hi * s;
                }
            }
        }
        out
    }

    /// Contracts `copies` slots with the same vector `h`.
    pub fn contract(&self, h: &[f64], copies: usize) -> Tensor {
        assert!(copies <= self.order);
        let mut t = self.clone();
        for _ in 0..copies {
            t = t.contract_once(h);
        }
        t
    }

    /// Contracts every slot with the given arguments, in order.
    pub fn apply(&self, args: &[&[f64]]) -> DVector<f64> {
        assert_eq!(args.len(), self.order);
        let mut t = self.clone();
        for a in args {
            t = t.contract_once(a);
        }
        t.to_vector()
    }

    /// Order-0 tensor as a vector in `R^components`.
    pub fn to_vector(&self) -> DVector<f64> {
        assert_eq!(self.order, 0, "tensor is not a vector");
        DVector::from_column_slice(&self.data)
    }

    /// Order-1 tensor as a `components x dim` matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.order, 1, "tensor is not a matrix");
        DMatrix::from_row_slice(self.components, self.dim, &self.data)
    }

    /// Largest absolute difference between an entry and any transposition of
    /// two of its slots. Zero for a symmetric tensor.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut index = vec![0usize; self.order];
        for c in 0..self.components {
            for flat in 0..self.block() {
                let mut rem = flat;
                for slot in (0..self.order).rev() {
                    index[slot] = rem % self.dim;
                    rem /= self.dim;
                }
                let v = self.get(c, &index);
                for a in 0..self.order {
                    for b in a + 1..self.order {
                        let mut swapped = index.clone();
                        swapped.swap(a, b);
                        worst = worst.max((v - self.get(c, &swapped)).abs());
                    }
                }
            }
        }
        worst
    }
}
