use serde::{Deserialize, Serialize};

use super::layer::{Activation, AffineLayer, LayerCache, LayerGrads};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// First-FC widths of the five heterogeneous reference models; every one of
/// them feeds a 500-wide representation layer.
pub const REFERENCE_HIDDEN_WIDTHS: [usize; 5] = [2000, 2000, 1000, 800, 500];
pub const REFERENCE_REP_DIM: usize = 500;

/// Shape of one extractor + header pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub rep_dim: usize,
    pub classes: usize,
}

impl ModelConfig {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        rep_dim: usize,
        classes: usize,
    ) -> Self {
        Self {
            input_dim,
            hidden_widths,
            rep_dim,
            classes,
        }
    }

    /// Dense counterpart of reference model `index` (0..5): one hidden layer
    /// of the listed width followed by the 500-wide representation layer.
    pub fn reference(index: usize, input_dim: usize, classes: usize) -> Result<Self> {
        let hidden = *REFERENCE_HIDDEN_WIDTHS
            .get(index)
            .ok_or_else(|| Error::config(format!("reference model index {index} out of 0..5")))?;
        Ok(Self::new(
            input_dim,
            vec![hidden],
            REFERENCE_REP_DIM,
            classes,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim must be > 0"));
        }
        if self.rep_dim == 0 {
            return Err(Error::config("rep_dim must be > 0"));
        }
        if self.classes < 2 {
            return Err(Error::config("classes must be >= 2"));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::config("hidden widths must be > 0"));
        }
        Ok(())
    }

    /// `(in, out)` for each extractor layer in order.
    pub fn extractor_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut prev = self.input_dim;
        for &w in self
            .hidden_widths
            .iter()
            .chain(std::iter::once(&self.rep_dim))
        {
            dims.push((prev, w));
            prev = w;
        }
        dims
    }

    /// Extractor parameters: weights plus one bias per output unit.
    pub fn extractor_param_count(&self) -> usize {
        self.extractor_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Header parameters: `rep_dim x classes`, no bias.
    pub fn header_param_count(&self) -> usize {
        self.rep_dim * self.classes
    }

    pub fn param_count(&self) -> usize {
        self.extractor_param_count() + self.header_param_count()
    }
}

/// Stack of affine + ReLU layers mapping inputs to representations.
#[derive(Clone, Debug)]
pub struct Extractor {
    layers: Vec<AffineLayer>,
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Smallest `|z|` over every cached pre-activation; distance of the
    /// forward pass from the nearest ReLU kink.
    pub fn min_abs_pre_activation(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|c| c.pre_activation().as_slice())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

#[derive(Clone, Debug)]
pub struct ExtractorGrads {
    pub layers: Vec<LayerGrads>,
}

impl ExtractorGrads {
    pub fn add_assign(&mut self, other: &ExtractorGrads) -> Result<()> {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            l.write_flat(out);
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.layers.iter().map(LayerGrads::norm_sq).sum()
    }
}

impl Extractor {
    pub fn new(layers: Vec<AffineLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("extractor needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::ShapeMismatch {
                    op: "Extractor::new",
                    left: pair[0].weights().shape(),
                    right: pair[1].weights().shape(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[AffineLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [AffineLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn rep_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(AffineLayer::param_count).sum()
    }

    /// Representation of each input row plus the cache for [`Extractor::backward`].
    pub fn extract(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "extract",
                left: x.shape(),
                right: (x.rows(), self.input_dim()),
            });
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (out, cache) = layer.forward(&h)?;
            caches.push(cache);
            h = out;
        }
        Ok((h, ForwardCache { layers: caches }))
    }

    pub fn represent(&self, x: &Matrix) -> Result<Matrix> {
        self.extract(x).map(|(r, _)| r)
    }

    /// Backpropagates `d loss / d rep` through the stack. When a
    /// representation feeds several consumers, pass the sum of their
    /// gradients as `d_rep`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_rep: &Matrix,
    ) -> Result<(ExtractorGrads, Matrix)> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::StaleCache(format!(
                "cache depth {} != extractor depth {}",
                cache.layers.len(),
                self.layers.len()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = d_rep.clone();
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            let (g, d_in) = layer.backward(c, &upstream)?;
            grads.push(g);
            upstream = d_in;
        }
        grads.reverse();
        Ok((ExtractorGrads { layers: grads }, upstream))
    }

    pub fn zero_grads(&self) -> ExtractorGrads {
        ExtractorGrads {
            layers: self.layers.iter().map(AffineLayer::zero_grads).collect(),
        }
    }

    pub fn sgd(&mut self, grads: &ExtractorGrads, lr: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::StaleCache("gradient depth mismatch".into()));
        }
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.sgd(g, lr)?;
        }
        Ok(())
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            l.write_params(out);
        }
    }

    pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let mut offset = 0;
        for l in &mut self.layers {
            offset += l.read_params(&src[offset..])?;
        }
        Ok(offset)
    }

    pub fn params_bit_eq(&self, other: &Extractor) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.params_bit_eq(b))
    }
}

/// Single bias-free affine map from a representation to class logits.
#[derive(Clone, Debug)]
pub struct Header {
    layer: AffineLayer,
}

impl Header {
    pub fn new(weights: Matrix) -> Result<Self> {
        Ok(Self {
            layer: AffineLayer::new(weights, None, Activation::Identity)?,
        })
    }

    pub fn from_layer(layer: AffineLayer) -> Result<Self> {
        if layer.bias().is_some() || layer.activation() != Activation::Identity {
            return Err(Error::config(
                "header must be a bias-free identity-activation layer",
            ));
        }
        Ok(Self { layer })
    }

    pub fn layer(&self) -> &AffineLayer {
        &self.layer
    }

    pub fn layer_mut(&mut self) -> &mut AffineLayer {
        &mut self.layer
    }

    pub fn in_dim(&self) -> usize {
        self.layer.in_dim()
    }

    pub fn classes(&self) -> usize {
        self.layer.out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layer.param_count()
    }

    pub fn forward(&self, rep: &Matrix) -> Result<(Matrix, LayerCache)> {
        if rep.cols() != self.in_dim() {
            return Err(Error::ShapeMismatch {
                op: "head_forward",
                left: rep.shape(),
                right: (rep.rows(), self.in_dim()),
            });
        }
        self.layer.forward(rep)
    }

    pub fn logits(&self, rep: &Matrix) -> Result<Matrix> {
        self.forward(rep).map(|(z, _)| z)
    }

    pub fn backward(&self, cache: &LayerCache, d_logits: &Matrix) -> Result<(LayerGrads, Matrix)> {
        self.layer.backward(cache, d_logits)
    }

    pub fn sgd(&mut self, grads: &LayerGrads, lr: f64) -> Result<()> {
        self.layer.sgd(grads, lr)
    }

    pub fn zero_grads(&self) -> LayerGrads {
        self.layer.zero_grads()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        self.layer.write_params(out)
    }

    pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        self.layer.read_params(src)
    }

    pub fn params_bit_eq(&self, other: &Header) -> bool {
        self.layer.params_bit_eq(&other.layer)
    }
}

/// Fresh extractor (He-uniform, zero bias) and header (Xavier-uniform) for `cfg`.
pub fn init_model(cfg: &ModelConfig, rng: &mut Rng) -> Result<(Extractor, Header)> {
    cfg.validate()?;
    let layers = cfg
        .extractor_dims()
        .into_iter()
        .map(|(i, o)| AffineLayer::he_uniform(i, o, true, Activation::Relu, rng))
        .collect::<Result<Vec<_>>>()?;
    let header =
        AffineLayer::xavier_uniform(cfg.rep_dim, cfg.classes, false, Activation::Identity, rng)?;
    Ok((Extractor::new(layers)?, Header { layer: header }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_gradient, max_relative_error, GRAD_CHECK_STEP};

    fn small_cfg() -> ModelConfig {
        ModelConfig::new(5, vec![7, 6], 4, 3)
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = small_cfg();
        let (e1, h1) = init_model(&cfg, &mut Rng::new(9)).unwrap();
        let (e2, h2) = init_model(&cfg, &mut Rng::new(9)).unwrap();
        assert!(e1.params_bit_eq(&e2) && h1.params_bit_eq(&h2));
        let (e3, _) = init_model(&cfg, &mut Rng::new(10)).unwrap();
        assert!(!e1.params_bit_eq(&e3));
    }

    #[test]
    fn reference_param_count() {
        let cfg = ModelConfig::reference(0, 3072, 10).unwrap();
        assert_eq!(cfg.hidden_widths, vec![2000]);
        assert_eq!(
            cfg.extractor_param_count(),
            3072 * 2000 + 2000 + 2000 * 500 + 500
        );
        assert_eq!(cfg.header_param_count(), 500 * 10);
    }

    #[test]
    fn param_count_matches_closed_form() {
        for cfg in [
            small_cfg(),
            ModelConfig::new(3, vec![], 2, 2),
            ModelConfig::new(8, vec![16], 4, 5),
        ] {
            let (e, h) = init_model(&cfg, &mut Rng::new(1)).unwrap();
            assert_eq!(e.param_count() + h.param_count(), cfg.param_count());
            let mut flat = Vec::new();
            e.write_params(&mut flat);
            h.write_params(&mut flat);
            assert_eq!(flat.len(), cfg.param_count());
        }
    }

    #[test]
    fn empty_hidden_is_single_layer() {
        let (e, _) = init_model(&ModelConfig::new(3, vec![], 2, 2), &mut Rng::new(1)).unwrap();
        assert_eq!(e.layers().len(), 1);
        assert_eq!((e.input_dim(), e.rep_dim()), (3, 2));
    }

    #[test]
    fn zero_width_config_rejected() {
        assert!(init_model(&ModelConfig::new(3, vec![0], 2, 2), &mut Rng::new(1)).is_err());
        assert!(init_model(&ModelConfig::new(3, vec![], 0, 2), &mut Rng::new(1)).is_err());
        assert!(init_model(&ModelConfig::new(3, vec![], 2, 1), &mut Rng::new(1)).is_err());
    }

    #[test]
    fn identity_and_zero_extractors() {
        let ex = Extractor::new(vec![AffineLayer::new(
            Matrix::identity(3),
            Some(Matrix::zeros(1, 3)),
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let x = Matrix::row_vector(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(ex.represent(&x).unwrap(), x);

        let zero = Extractor::new(vec![AffineLayer::new(
            Matrix::zeros(2, 3),
            Some(Matrix::zeros(1, 2)),
            Activation::Relu,
        )
        .unwrap()])
        .unwrap();
        assert_eq!(zero.represent(&x).unwrap().as_slice(), &[0.0, 0.0]);
        assert!(zero.extract(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn header_cases() {
        let h = Header::new(Matrix::zeros(3, 4)).unwrap();
        let rep = Matrix::row_vector(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(h.logits(&rep).unwrap().as_slice(), &[0.0; 3]);
        let h = Header::new(Matrix::identity(3)).unwrap();
        let rep = Matrix::row_vector(&[0.1, -0.2, 0.3]).unwrap();
        assert_eq!(h.logits(&rep).unwrap(), rep);
        assert!(h.logits(&Matrix::zeros(1, 2)).is_err());
    }

    /// Scalar probe of a representation: `sum_j c_j * rep_j`.
    fn probe(rep: &Matrix, coeffs: &[f64]) -> f64 {
        rep.as_slice().iter().zip(coeffs).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn extractor_backprop_matches_finite_differences() {
        let cfg = small_cfg();
        let mut rng = Rng::new(21);
        let (ex, _) = init_model(&cfg, &mut rng).unwrap();
        let x = Matrix::from_fn(2, 5, |_, _| rng.uniform(-1.0, 1.0));
        let coeffs: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();

        let (rep, cache) = ex.extract(&x).unwrap();
        let d_rep = Matrix::new(2, 4, coeffs.clone()).unwrap();
        let (grads, dx) = ex.backward(&cache, &d_rep).unwrap();
        let _ = rep;

        let mut analytic = Vec::new();
        grads.write_flat(&mut analytic);
        let mut theta = Vec::new();
        ex.write_params(&mut theta);
        let numeric = finite_diff_gradient(
            |p| {
                let mut e = ex.clone();
                e.read_params(p).unwrap();
                probe(&e.represent(&x).unwrap(), &coeffs)
            },
            &theta,
            GRAD_CHECK_STEP,
        )
        .unwrap();
        assert!(max_relative_error(&analytic, &numeric) <= 1e-4);

        let numeric_x = finite_diff_gradient(
            |v| {
                probe(
                    &ex.represent(&Matrix::new(2, 5, v.to_vec()).unwrap())
                        .unwrap(),
                    &coeffs,
                )
            },
            x.as_slice(),
            GRAD_CHECK_STEP,
        )
        .unwrap();
        assert!(max_relative_error(dx.as_slice(), &numeric_x) <= 1e-4);
    }

    #[test]
    fn header_backprop_matches_finite_differences() {
        let mut rng = Rng::new(4);
        let (_, h) = init_model(&small_cfg(), &mut rng).unwrap();
        let rep = Matrix::from_fn(1, 4, |_, _| rng.uniform(-1.0, 1.0));
        let (logits, cache) = h.forward(&rep).unwrap();
        let (_, d_logits) = crate::numerics::cross_entropy(&logits, &[2]).unwrap();
        let (g, d_rep) = h.backward(&cache, &d_logits).unwrap();
        let mut w = Vec::new();
        h.write_params(&mut w);
        let loss_at = |hh: &Header, r: &Matrix| {
            crate::numerics::cross_entropy(&hh.logits(r).unwrap(), &[2])
                .unwrap()
                .0
        };
        let numeric = finite_diff_gradient(
            |p| {
                let mut hh = h.clone();
                hh.read_params(p).unwrap();
                loss_at(&hh, &rep)
            },
            &w,
            GRAD_CHECK_STEP,
        )
        .unwrap();
        assert!(max_relative_error(g.weights.as_slice(), &numeric) <= 1e-4);
        let numeric_rep = finite_diff_gradient(
            |v| loss_at(&h, &Matrix::row_vector(v).unwrap()),
            rep.as_slice(),
            GRAD_CHECK_STEP,
        )
        .unwrap();
        assert!(max_relative_error(d_rep.as_slice(), &numeric_rep) <= 1e-4);
    }

    #[test]
    fn two_consumers_sum_gradients() {
        // rep feeds two heads; the rep gradient is the sum of both heads' gradients.
        let mut rng = Rng::new(8);
        let (ex, h1) = init_model(&small_cfg(), &mut rng).unwrap();
        let (_, h2) = init_model(&small_cfg(), &mut rng).unwrap();
        let x = Matrix::from_fn(1, 5, |_, _| rng.uniform(-1.0, 1.0));
        let loss_one = |h: &Header, x: &Matrix| {
            crate::numerics::cross_entropy(&h.logits(&ex.represent(x).unwrap()).unwrap(), &[1])
                .unwrap()
                .0
        };
        let fd1 = finite_diff_gradient(
            |v| loss_one(&h1, &Matrix::row_vector(v).unwrap()),
            x.as_slice(),
            GRAD_CHECK_STEP,
        )
        .unwrap();
        let fd2 = finite_diff_gradient(
            |v| loss_one(&h2, &Matrix::row_vector(v).unwrap()),
            x.as_slice(),
            GRAD_CHECK_STEP,
        )
        .unwrap();

        let (rep, cache) = ex.extract(&x).unwrap();
        let mut d_rep = Matrix::zeros(1, 4);
        for h in [&h1, &h2] {
            let (z, c) = h.forward(&rep).unwrap();
            let (_, dz) = crate::numerics::cross_entropy(&z, &[1]).unwrap();
            let (_, dr) = h.backward(&c, &dz).unwrap();
            d_rep.add_assign(&dr).unwrap();
        }
        let (_, dx) = ex.backward(&cache, &d_rep).unwrap();
        let expected: Vec<f64> = fd1.iter().zip(&fd2).map(|(a, b)| a + b).collect();
        assert!(max_relative_error(dx.as_slice(), &expected) <= 1e-4);
    }

    #[test]
    fn backward_rejects_wrong_depth_cache() {
        let mut rng = Rng::new(2);
        let (a, _) = init_model(&small_cfg(), &mut rng).unwrap();
        let (b, _) = init_model(&ModelConfig::new(5, vec![], 4, 3), &mut rng).unwrap();
        let x = Matrix::zeros(1, 5);
        let (_, cache_b) = b.extract(&x).unwrap();
        assert!(matches!(
            a.backward(&cache_b, &Matrix::zeros(1, 4)),
            Err(Error::StaleCache(_))
        ));
    }
}
