"""
SSVAER, SVAER and FCNN regressors and their loss terms.

All three models share one inference column, a shared encoder followed by the
quality regressor. Everything else (latent encoder, pseudo-variation
regressor, latent generator, decoder) only regularizes that column during
training, so ``predict_y`` never touches it.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from softsensor.Autodiff import Tensor, concat, stop_gradient
from softsensor.NeuralBlocks import LayerParams, MlpSpec, init_mlp, mlp_forward, named_parameters
from softsensor.VariationalOps import DiagGaussian, gauss_entropy, gauss_nll, kl_diag, reparameterize
from softsensor.exceptions import ConfigError, DataError, ShapeError

logger = logging.getLogger(__name__)

MODEL_KINDS = ("ssvaer", "svaer", "fcnn")

# Fixed sub-seeds keep each subnetwork's draw independent of which others exist,
# so all three kinds start from the same inference column for a given seed.
_SUBNET_SEEDS = {
    "shared": 0,
    "latent_encoder": 1,
    "quality_regressor": 2,
    "pv_regressor": 3,
    "latent_generator": 4,
    "decoder": 5,
    "direction": 6,
}


class NoiseSource:
    """Standard-normal draws for the reparameterization trick, from a seeded generator."""

    def __init__(self, seed=None, rng: Optional[np.random.Generator] = None):
        self._rng = rng if rng is not None else np.random.default_rng(seed)

    def normal(self, shape: Tuple[int, ...]) -> np.ndarray:
        return self._rng.standard_normal(shape)


class ZeroNoise(NoiseSource):
    """Noise source that always returns zeros, so every sample equals its mean."""

    def __init__(self):
        super().__init__(seed=0)

    def normal(self, shape: Tuple[int, ...]) -> np.ndarray:
        return np.zeros(shape)


@dataclass(frozen=True)
class TermWeights:
    """
    Multipliers of the loss terms in the minimized total.

    The total is ``rec + kl + pv + label - entropy + recon_reg`` with every term
    scaled by its weight. ``entropy_minimising`` flips the entropy sign to ``+``.
    """
    rec: float = 1.0
    kl: float = 1.0
    pv: float = 1.0
    label: float = 1.0
    entropy: float = 1.0
    recon_reg: float = 1.0
    entropy_minimising: bool = False

    @property
    def entropy_sign(self) -> float:
        return 1.0 if self.entropy_minimising else -1.0


@dataclass
class LossTerms:
    """
    Named scalar loss terms of one batch; terms a model does not have stay None.

    Every term is a positive penalty except entropy, which enters the total
    with the sign given by :class:`TermWeights`.
    """
    total: Tensor
    rec: Optional[Tensor] = None
    kl: Optional[Tensor] = None
    pv: Optional[Tensor] = None
    label: Optional[Tensor] = None
    entropy: Optional[Tensor] = None
    recon_reg: Optional[Tensor] = None
    mse: Optional[Tensor] = None

    ORDER = ("rec", "kl", "pv", "label", "entropy", "recon_reg", "mse", "total")

    def to_dict(self) -> Dict[str, float]:
        values = {}
        for name in self.ORDER:
            term = getattr(self, name)
            if term is not None:
                values[name] = term.item()
        return values


@dataclass(frozen=True)
class NetworkSizes:
    """
    Layer widths of every subnetwork.

    ``shared`` lists the widths after the input layer; the input width comes
    from the data. ``decoder`` lists the hidden widths between the latent and
    the reconstructed input; when omitted it mirrors the encoder chain.
    """
    shared: Tuple[int, ...] = (20, 16, 12)
    latent: Tuple[int, ...] = (12, 6, 6)
    regressor: Tuple[int, ...] = (12, 6, 1)
    generator: Tuple[int, ...] = (2, 2, 6)
    decoder: Optional[Tuple[int, ...]] = None
    activation: str = "relu"

    def validate(self, kind: str = "ssvaer") -> None:
        if not self.shared:
            raise ConfigError("shared encoder needs at least one layer width")
        if len(self.regressor) < 2 or self.regressor[0] != self.shared[-1]:
            raise ConfigError(
                f"regressor sizes {self.regressor} must start at the shared output width {self.shared[-1]}")
        if self.regressor[-1] != 1:
            raise ConfigError(f"regressor must end in width 1, got {self.regressor}")
        if kind == "fcnn":
            return
        if len(self.latent) < 2 or self.latent[0] != self.shared[-1]:
            raise ConfigError(
                f"latent encoder sizes {self.latent} must start at the shared output width {self.shared[-1]}")
        if kind == "ssvaer":
            if len(self.generator) < 2 or self.generator[0] != 2:
                raise ConfigError(f"latent generator takes (y, dy) so must start at width 2, got {self.generator}")
            if self.generator[-1] != self.latent[-1]:
                raise ConfigError(
                    f"latent generator width {self.generator[-1]} differs from latent width {self.latent[-1]}")

    @property
    def latent_width(self) -> int:
        return self.latent[-1]

    def decoder_sizes(self, input_width: int) -> Tuple[int, ...]:
        if self.decoder is not None:
            hidden = tuple(self.decoder)
        else:
            hidden = tuple(reversed(self.latent[1:-1])) + tuple(reversed(self.shared))
        return (self.latent_width,) + hidden + (input_width,)


def _subnet_seed(seed: int, name: str) -> List[int]:
    return [int(seed), _SUBNET_SEEDS[name]]


def _rows(q: DiagGaussian, indices: np.ndarray) -> DiagGaussian:
    return DiagGaussian(q.mean.take_rows(indices), q.logvar.take_rows(indices))


class Subnetwork:
    """A named MLP: its spec plus its parameters."""

    def __init__(self, name: str, spec: MlpSpec, seed: int):
        """
        Args:
            name: Parameter-name prefix and sub-seed key
            spec: Layer widths, activation and head count
            seed: Run seed; combined with the name's sub-seed for initialization
        """
        self.name = name
        self.spec = spec
        self.layers: List[LayerParams] = init_mlp(spec, _subnet_seed(seed, name))

    def __call__(self, x: Tensor, frozen: bool = False):
        """
        Run the network on a batch.

        Args:
            x: Batch matrix
            frozen: Evaluate behind a stop-gradient so no parameter receives gradient

        Returns:
            Tuple[Tensor, Optional[Tensor]]: Mean and, for two-head specs, log-variance
        """
        return mlp_forward(self.layers, self.spec, x, frozen=frozen)

    def gaussian(self, x: Tensor, frozen: bool = False) -> DiagGaussian:
        """Run a two-head network and wrap its outputs as a diagonal Gaussian."""
        mean, logvar = self(x, frozen=frozen)
        return DiagGaussian(mean, logvar)

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        """``(prefix.index.weight|bias, tensor)`` pairs in layer order."""
        return named_parameters(self.name, self.layers)


class RegressionModel:
    """
    Base class holding the shared encoder and the quality regressor.

    Attributes:
        input_width (int): Number of input columns
        sizes (NetworkSizes): Layer widths used to build the subnetworks
        label_mean (float): Mean used to de-standardize predictions
        label_scale (float): Scale used to de-standardize predictions
    """
    kind = ""
    TERM_NAMES: Tuple[str, ...] = ()

    def __init__(self, input_width: int, sizes: NetworkSizes, seed: int, regressor_heads: int):
        sizes.validate(self.kind)
        self.input_width = int(input_width)
        self.sizes = sizes
        self.seed = int(seed)
        self.label_mean = 0.0
        self.label_scale = 1.0
        act = sizes.activation
        self.shared = Subnetwork(
            "shared", MlpSpec((self.input_width,) + tuple(sizes.shared), act, output_activation=act), seed)
        self.quality_regressor = Subnetwork(
            "quality_regressor", MlpSpec(tuple(sizes.regressor), act, heads=regressor_heads), seed)

    def subnetworks(self) -> List[Subnetwork]:
        return [self.shared, self.quality_regressor]

    def parameters(self) -> Dict[str, Tensor]:
        """Trainable tensors of every subnetwork, keyed ``<subnetwork>.<layer>.<weight|bias>``."""
        params: Dict[str, Tensor] = {}
        for subnet in self.subnetworks():
            params.update(subnet.named_parameters())
        return params

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of the parameter values, for checkpoints and best-epoch snapshots."""
        return {name: tensor.values.copy() for name, tensor in self.parameters().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Overwrite parameter values from ``state``.

        Raises:
            ShapeError: If the names or any array shape differ from this model's parameters
        """
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise ShapeError(f"parameter names differ: missing {missing}, unexpected {unexpected}")
        for name, tensor in params.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != tensor.shape:
                raise ShapeError(f"parameter '{name}' has shape {values.shape}, model expects {tensor.shape}")
            tensor.values = values.copy()

    def apply_constraints(self) -> None:
        """Project parameters back onto their constraint sets after an update."""

    def set_label_scaling(self, mean: float, scale: float) -> None:
        """Label mean and scale that ``predict_y`` uses to return original units."""
        self.label_mean = float(mean)
        self.label_scale = float(scale)

    def _inputs(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        if len(x.shape) != 2 or x.shape[1] != self.input_width:
            raise ShapeError(f"model expects input width {self.input_width}, got shape {x.shape}")
        return x

    def _check_batch(self, batch) -> None:
        if batch.size == 0:
            raise DataError("cannot compute losses on an empty batch")
        self._inputs(batch.x_t)

    def quality(self, x: Tensor) -> Tuple[Tensor, Optional[Tensor]]:
        return self.quality_regressor(self.shared(x)[0])

    def predict_y(self, x, batch_size: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        Predict the quality variable from standardized inputs.

        Only the shared encoder and the quality regressor run. Outputs are in
        original label units: the mean is de-standardized and the variance is
        multiplied by the squared label scale. Models without a variance head
        report zero variance.

        Args:
            x: Standardized input rows
            batch_size: Evaluate in chunks of this many rows

        Returns:
            Tuple[np.ndarray, np.ndarray]: Per-row mean and variance
        """
        rows = np.atleast_2d(np.asarray(x, dtype=np.float64))
        step = batch_size or max(len(rows), 1)
        means, variances = [], []
        for start in range(0, len(rows), step):
            mean, logvar = self.quality(self._inputs(rows[start:start + step]))
            means.append(mean.values[:, 0])
            variances.append(np.zeros(len(mean.values)) if logvar is None else np.exp(logvar.values[:, 0]))
        mean = np.concatenate(means) if means else np.zeros(0)
        variance = np.concatenate(variances) if variances else np.zeros(0)
        return mean * self.label_scale + self.label_mean, variance * self.label_scale ** 2

    def loss_terms(self, batch, noise: NoiseSource, weights: TermWeights = TermWeights()) -> LossTerms:
        raise NotImplementedError


class FcnnModel(RegressionModel):
    """Fully connected baseline: the bare inference column with a mean-only output."""
    kind = "fcnn"
    TERM_NAMES = ("mse", "total")

    def __init__(self, input_width: int, sizes: NetworkSizes = NetworkSizes(), seed: int = 0):
        super().__init__(input_width, sizes, seed, regressor_heads=1)

    def loss_terms(self, batch, noise: NoiseSource = None, weights: TermWeights = TermWeights()) -> LossTerms:
        mse = fcnn_loss(self, batch)
        return LossTerms(total=mse * 1.0, mse=mse)


class _VariationalModel(RegressionModel):
    """Common pieces of SVAER and SSVAER: latent encoder, decoder, labelled/unlabelled terms."""

    def __init__(self, input_width: int, sizes: NetworkSizes, seed: int):
        super().__init__(input_width, sizes, seed, regressor_heads=2)
        act = sizes.activation
        self.latent_encoder = Subnetwork("latent_encoder", MlpSpec(tuple(sizes.latent), act, heads=2), seed)
        self.decoder = Subnetwork(
            "decoder", MlpSpec(sizes.decoder_sizes(self.input_width), act, heads=2), seed)

    def subnetworks(self) -> List[Subnetwork]:
        return [self.shared, self.latent_encoder, self.quality_regressor, self.decoder]

    def latent_means(self, x, batch_size: Optional[int] = None) -> np.ndarray:
        """Latent-encoder means for standardized input rows."""
        rows = np.atleast_2d(np.asarray(x, dtype=np.float64))
        step = batch_size or max(len(rows), 1)
        chunks = [self.latent_encoder(self.shared(self._inputs(rows[start:start + step]))[0])[0].values
                  for start in range(0, len(rows), step)]
        return np.concatenate(chunks) if chunks else np.zeros((0, self.sizes.latent_width))

    @staticmethod
    def _label_terms(q_y: DiagGaussian, batch) -> Tuple[Tensor, Tensor]:
        labelled = np.flatnonzero(batch.mask)
        unlabelled = np.flatnonzero(~batch.mask)
        if labelled.size:
            target = Tensor(np.asarray(batch.y, dtype=np.float64).reshape(-1, 1))
            label = gauss_nll(_rows(q_y, labelled), target).mean()
        else:
            label = Tensor(0.0)
        if unlabelled.size:
            entropy = gauss_entropy(_rows(q_y, unlabelled)).mean()
        else:
            entropy = Tensor(0.0)
        return label, entropy


@dataclass
class SsvaerTrace:
    """Loss terms of one SSVAER forward pass plus its next-record intermediates and label sample."""
    terms: LossTerms
    shared_next: Tensor
    latent_next: DiagGaussian
    pv_next: Tensor
    y_sample: Tensor


class SsvaerModel(_VariationalModel):
    """
    Semi-supervised VAE regressor with a pseudo-variation regressor.

    The latent generator maps ``(y, dy)`` to a Gaussian prior over the latent
    space; the pseudo-variation regressor shares the quality regressor's
    layer sizes.
    """
    kind = "ssvaer"
    TERM_NAMES = ("rec", "kl", "pv", "label", "entropy", "recon_reg", "total")

    def __init__(self, input_width: int, sizes: NetworkSizes = NetworkSizes(), seed: int = 0):
        super().__init__(input_width, sizes, seed)
        act = sizes.activation
        self.pv_regressor = Subnetwork("pv_regressor", MlpSpec(tuple(sizes.regressor), act), seed)
        self.latent_generator = Subnetwork(
            "latent_generator", MlpSpec(tuple(sizes.generator), act, heads=2), seed)

    def subnetworks(self) -> List[Subnetwork]:
        return [self.shared, self.latent_encoder, self.quality_regressor,
                self.pv_regressor, self.latent_generator, self.decoder]

    def forward_trace(self, batch, noise: NoiseSource, weights: TermWeights = TermWeights()) -> SsvaerTrace:
        """
        Run the six-term SSVAER objective on one batch of consecutive-record pairs.

        The successor record goes through the shared encoder under a stop-gradient,
        and the regularizing reconstruction decodes through a frozen decoder.

        Args:
            batch: Pairs with the labelled mask of their first records
            noise: Source of the reparameterization draws
            weights: Term multipliers and the entropy sign

        Returns:
            SsvaerTrace: Loss terms plus the next-record tensors and the label sample
        """
        self._check_batch(batch)
        x_t = Tensor(batch.x_t)
        x_next = Tensor(batch.x_next)

        h_t = self.shared(x_t)[0]
        shared_next = self.shared(x_next)[0]
        h_next = stop_gradient(shared_next)

        q_z = self.latent_encoder.gaussian(h_t)
        q_y = self.quality_regressor.gaussian(h_t)
        dy_t = self.pv_regressor(h_t)[0]
        dy_next = stop_gradient(self.pv_regressor(h_next)[0])

        y_sample = reparameterize(q_y, noise.normal(q_y.mean.shape))
        prior_t = self.latent_generator.gaussian(concat([y_sample, dy_t], axis=1))
        prior_next = self.latent_generator.gaussian(concat([y_sample + dy_t, dy_next], axis=1))
        latent_next = self.latent_encoder.gaussian(h_next).detached()

        z_t = reparameterize(q_z, noise.normal(q_z.mean.shape))
        reconstruction = self.decoder.gaussian(z_t)
        z_y = reparameterize(prior_t, noise.normal(prior_t.mean.shape))
        regularized = self.decoder.gaussian(z_y, frozen=True)

        rec = gauss_nll(reconstruction, x_t).mean()
        kl = kl_diag(q_z, prior_t).mean()
        pv = kl_diag(latent_next, prior_next).mean()
        label, entropy = self._label_terms(q_y, batch)
        recon_reg = gauss_nll(regularized, x_t).mean()

        total = rec * weights.rec + kl * weights.kl + pv * weights.pv + label * weights.label \
            + entropy * (weights.entropy_sign * weights.entropy) + recon_reg * weights.recon_reg
        terms = LossTerms(total=total, rec=rec, kl=kl, pv=pv, label=label, entropy=entropy, recon_reg=recon_reg)
        return SsvaerTrace(
            terms=terms, shared_next=shared_next, latent_next=latent_next, pv_next=dy_next,
            y_sample=y_sample,
        )

    def loss_terms(self, batch, noise: NoiseSource, weights: TermWeights = TermWeights()) -> LossTerms:
        return self.forward_trace(batch, noise, weights).terms


class SvaerModel(_VariationalModel):
    """
    Supervised VAE regressor extended to unlabelled rows through the entropy term.

    The latent prior is ``N(W * y, sigma^2 I)`` with ``W`` a unit direction and
    ``sigma^2`` the regressor's predicted variance.
    """
    kind = "svaer"
    TERM_NAMES = ("rec", "kl", "label", "entropy", "total")

    def __init__(self, input_width: int, sizes: NetworkSizes = NetworkSizes(), seed: int = 0):
        super().__init__(input_width, sizes, seed)
        rng = np.random.default_rng(_subnet_seed(seed, "direction"))
        direction = rng.standard_normal((1, sizes.latent_width))
        self.direction = Tensor(direction / np.linalg.norm(direction), requires_grad=True)

    def parameters(self) -> Dict[str, Tensor]:
        params = super().parameters()
        params["latent_generator.direction"] = self.direction
        return params

    def apply_constraints(self) -> None:
        """Project the latent direction back onto the unit sphere after an optimizer step."""
        norm = np.linalg.norm(self.direction.values)
        if norm > 0:
            self.direction.values = self.direction.values / norm

    def loss_terms(self, batch, noise: NoiseSource, weights: TermWeights = TermWeights()) -> LossTerms:
        self._check_batch(batch)
        x_t = Tensor(batch.x_t)
        h_t = self.shared(x_t)[0]
        q_z = self.latent_encoder.gaussian(h_t)
        q_y = self.quality_regressor.gaussian(h_t)

        y_sample = reparameterize(q_y, noise.normal(q_y.mean.shape))
        width = self.sizes.latent_width
        prior = DiagGaussian(y_sample @ self.direction, q_y.logvar.broadcast_to((batch.size, width)))

        z_t = reparameterize(q_z, noise.normal(q_z.mean.shape))
        rec = gauss_nll(self.decoder.gaussian(z_t), x_t).mean()
        kl = kl_diag(q_z, prior).mean()
        label, entropy = self._label_terms(q_y, batch)

        total = rec * weights.rec + kl * weights.kl + label * weights.label \
            + entropy * (weights.entropy_sign * weights.entropy)
        return LossTerms(total=total, rec=rec, kl=kl, label=label, entropy=entropy)


def ssvaer_loss_terms(model: SsvaerModel, batch, noise: NoiseSource,
                      weights: TermWeights = TermWeights()) -> LossTerms:
    """Loss terms of one SSVAER batch (see :meth:`SsvaerModel.forward_trace`)."""
    return model.loss_terms(batch, noise, weights)


def svaer_loss_terms(model: SvaerModel, batch, noise: NoiseSource,
                     weights: TermWeights = TermWeights()) -> LossTerms:
    """Loss terms of one SVAER batch."""
    return model.loss_terms(batch, noise, weights)


def fcnn_loss(model: RegressionModel, batch) -> Tensor:
    """
    Mean squared error of the regressor mean over labelled rows.

    Raises:
        DataError: If the batch has no labelled row
    """
    labelled = np.flatnonzero(batch.mask)
    if labelled.size == 0:
        raise DataError("fcnn loss needs at least one labelled row")
    mean, _ = model.quality(model._inputs(batch.x_t[labelled]))
    target = np.asarray(batch.y, dtype=np.float64).reshape(-1, 1)
    return (mean - target).square().mean()


def predict_y(model: RegressionModel, x, batch_size: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """De-standardized mean and variance of the quality variable (see :meth:`RegressionModel.predict_y`)."""
    return model.predict_y(x, batch_size=batch_size)


def build_model(kind: str, input_width: int, sizes: NetworkSizes = NetworkSizes(), seed: int = 0) -> RegressionModel:
    """
    Construct a freshly initialized model of the given kind.

    Raises:
        ConfigError: If the kind is unknown or the sizes do not chain
    """
    classes = {"ssvaer": SsvaerModel, "svaer": SvaerModel, "fcnn": FcnnModel}
    if kind not in classes:
        raise ConfigError(f"unknown model kind '{kind}', expected one of {MODEL_KINDS}")
    model = classes[kind](input_width, sizes, seed)
    logger.info(f"Built {kind} model with {model.parameter_count()} parameters (input width {input_width})")
    return model
