"""End-to-end transmission and joint training across modulation orders.

One training iteration draws a channel SNR uniformly (in dB) inside
each order's band, runs the same mini-batch through the full digital
chain (encode, quantize, modulate, AWGN, detect, dequantize, decode)
once per order, and takes a single Adam step on the weighted sum of
the per-order losses. Each per-order loss is

    e(x_hat, x) + alpha_k * e(y_hat, sg y) + beta_k * e(y, sg y_hat)

with sg the stop-gradient: the reconstruction term reaches the encoder
through the straight-through estimator across detection+quantization,
the alpha term moves only the codewords that were detected, and the
beta term pulls only the encoder toward the codebook.

The benchmark trainers reuse the same band pass: the model-efficient
single-stage variant differs only in hyperparameters and codec, the
two-stage variant freezes the codec after a top-order-only stage and
then fits the remaining codebooks alone, and the task-effective
variant fits K independent codecs each inside its own SNR band.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ujscc import channel as ch
from ujscc import vq
from ujscc.codec import ArchitectureConfig, Codec, SETTINGS, build_codec, build_te_bundle
from ujscc.data import ImageDataset, batches, split_train_val
from ujscc.metrics import image_report, mse
from ujscc.nn.layers import Param
from ujscc.nn.optim import Adam
from ujscc.nn.rng import STREAM_CODEBOOK, STREAM_EVAL, STREAM_INIT, STREAM_TRAIN, STREAM_VAL, rng_stream

# (setting, scheme) -> training hyperparameters; me2 lists the second
# stage separately (first stage trains the top order alone).
HYPERPARAMS = {
    ("basic", "ujscc"): dict(alphas=(3, 1.5, 1, 0.7, 0.5), lambdas=(1, 1, 1, 1, 1)),
    ("basic", "me1"): dict(alphas=(5, 4, 3, 2, 1.5), lambdas=(1, 1, 1, 4, 16)),
    ("basic", "me2"): dict(
        alphas=(1, 1, 1, 1, 1),
        lambdas=(1, 1, 1, 1, 1),
        stage2_alphas=(5, 3, 2, 1),
        stage2_lambdas=(1, 1, 1, 1),
    ),
    ("basic", "te"): dict(alphas=(4, 1, 1, 1, 1), lambdas=(1, 1, 1, 1, 1)),
    ("large", "ujscc"): dict(alphas=(3, 2, 1, 0.7, 0.5), lambdas=(1, 1, 2, 4, 16)),
    ("large", "me1"): dict(alphas=(5, 4, 3, 2, 1.5), lambdas=(1, 1, 1, 4, 16)),
    ("large", "me2"): dict(
        alphas=(1, 1, 1, 1, 1),
        lambdas=(1, 1, 1, 1, 1),
        stage2_alphas=(5, 3, 2, 1),
        stage2_lambdas=(1, 1, 1, 1),
    ),
    ("large", "te"): dict(alphas=(4, 2, 1, 1, 1), lambdas=(1, 1, 1, 1, 1)),
    ("more_symbols", "ujscc"): dict(alphas=(3, 2, 1, 0.7, 0.5), lambdas=(1, 1, 1, 4, 16)),
    ("more_symbols", "me1"): dict(alphas=(5, 4, 3, 2, 1.5), lambdas=(1, 1, 1, 4, 16)),
    ("more_symbols", "me2"): dict(
        alphas=(1, 1, 1, 1, 1),
        lambdas=(1, 1, 1, 1, 1),
        stage2_alphas=(5, 3, 2, 1),
        stage2_lambdas=(1, 1, 1, 1),
    ),
    ("more_symbols", "te"): dict(alphas=(1, 1, 1, 1, 1), lambdas=(1, 1, 1, 1, 1)),
}


@dataclass
class TrainConfig:
    alphas: tuple[float, ...]
    lambdas: tuple[float, ...]
    stage2_alphas: tuple[float, ...] | None = None
    stage2_lambdas: tuple[float, ...] | None = None
    lr: float = 1e-3
    lr_halving_epochs: int = 20
    batch_size: int = 64
    max_epochs: int = 400
    patience: int = 20
    val_fraction: float = 0.2
    beta_ratio: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if any(a <= 0 for a in self.alphas) or any(l <= 0 for l in self.lambdas):
            raise ValueError("alpha and lambda weights must be positive")

    @property
    def betas(self) -> tuple[float, ...]:
        return tuple(self.beta_ratio * a for a in self.alphas)


def default_train_config(setting: str, scheme: str, **overrides) -> TrainConfig:
    key = (setting, "me1" if scheme == "me" else scheme)
    if key not in HYPERPARAMS:
        raise ValueError(f"no hyperparameters for {key}")
    return TrainConfig(**{**HYPERPARAMS[key], **overrides})


@dataclass
class System:
    """A runnable scheme: codec(s), codebooks, and the modulation plan.

    ``te_index`` marks a single-order slice of the task-effective
    bundle (as loaded from one of its per-order checkpoints); such a
    system only serves that order.
    """

    scheme: str  # ujscc | me | te
    arch: ArchitectureConfig
    plan: ch.ModulationPlan
    codecs: list[Codec]
    codebooks: list[vq.Codebook]
    te_index: int | None = None

    def _check_order(self, k: int) -> None:
        if self.te_index is not None and k != self.te_index:
            raise ValueError(
                f"this checkpoint serves order {self.te_index} only, not {k}"
            )

    def codec_for(self, k: int) -> Codec:
        self._check_order(k)
        return self.codecs[0] if len(self.codecs) == 1 else self.codecs[k - 1]

    def codebook_for(self, k: int) -> vq.Codebook:
        self._check_order(k)
        return self.codebooks[0] if len(self.codebooks) == 1 else self.codebooks[k - 1]

    def params(self) -> list[Param]:
        out = []
        for codec in self.codecs:
            out.extend(codec.params())
        out.extend(cb.param for cb in self.codebooks)
        return out

    def zero_grads(self) -> None:
        for p in self.params():
            p.zero_grad()

    def state_entries(self) -> list[tuple[str, np.ndarray]]:
        items = []
        for i, codec in enumerate(self.codecs, start=1):
            prefix = f"codec{i}." if len(self.codecs) > 1 else ""
            items.extend((prefix + n, a) for n, a in codec.state_entries())
        items.extend((f"codebook{cb.order_index}", cb.values) for cb in self.codebooks)
        return items

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.state_entries()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, arr in self.state_entries():
            arr[...] = snap[name]


def build_system(arch: ArchitectureConfig | str, scheme: str, seed: int = 0) -> System:
    if isinstance(arch, str):
        arch = SETTINGS[arch]
    base = "me" if scheme in ("me", "me1", "me2") else scheme
    plan = ch.default_plan(arch.dims)
    init_rng = rng_stream(seed, STREAM_INIT)
    cb_rng = rng_stream(seed, STREAM_CODEBOOK)
    if base == "te":
        codecs = build_te_bundle(arch, init_rng)
        books = vq.init_codebooks(plan, cb_rng)
    elif base == "me":
        codecs = [build_codec(arch, "me", init_rng)]
        books = vq.init_codebooks(plan, cb_rng, shared_dim=arch.dims[-1])
    else:
        codecs = [build_codec(arch, "ujscc", init_rng)]
        books = vq.init_codebooks(plan, cb_rng)
    return System(base, arch, plan, codecs, books)


# -- Algorithm: single-image transmission -----------------------------------


@dataclass
class TransmissionResult:
    x_hat: np.ndarray
    k: int
    snr_db: float
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    s_hat: np.ndarray
    z_hat: np.ndarray
    y_hat: np.ndarray


def transmit_image(
    system: System,
    x: np.ndarray,
    snr_db: float,
    rng: np.random.Generator,
    realization: ch.ChannelRealization | None = None,
) -> TransmissionResult:
    """Send one image end to end at the given channel SNR (eval mode).

    ``realization`` overrides the channel draw (e.g. a zero-variance
    one); the order is still selected from ``snr_db``.
    """
    k = ch.select_order(snr_db, system.plan.policy)
    codec = system.codec_for(k)
    book = system.codebook_for(k)
    const = system.plan.constellation(k)
    y = codec.encode(x, k, training=False)
    z = vq.quantize(y, book)
    s = ch.modulate(z, const)
    if realization is None:
        realization = ch.channel_realization(snr_db, rng)
    s_hat = ch.transmit(s, realization)
    z_hat = ch.detect(s_hat, const)
    y_hat = vq.dequantize(z_hat, book)
    x_hat = codec.decode(vq.straight_through(y, y_hat), k, training=False)
    return TransmissionResult(x_hat, k, snr_db, y, z, s, s_hat, z_hat, y_hat)


# -- per-band loss -----------------------------------------------------------


@dataclass
class BandLossTerms:
    total: float
    recon: float
    codebook_term: float
    commitment_term: float
    ser: float
    grad_x: np.ndarray | None = None


def band_pass(
    codec: Codec,
    codebook: vq.Codebook,
    constellation: ch.Constellation,
    x: np.ndarray,
    k: int,
    snr_db: float,
    alpha: float,
    beta: float,
    rng: np.random.Generator | None,
    weight: float = 1.0,
    training: bool = True,
    compute_grads: bool = False,
    bypass_channel: bool = False,
    update_running: bool = True,
    codebook_only: bool = False,
    want_grad_x: bool = False,
) -> BandLossTerms:
    """One forward (and optionally backward) of order k's loss on a batch.

    ``bypass_channel`` short-circuits quantization and the channel
    (y_hat := y), leaving a differentiable graph the finite-difference
    checker can probe; the straight-through node stays in the path.
    ``codebook_only`` computes just the alpha term with the codec in
    eval mode, which is the second-stage objective of the two-stage
    baseline. Gradients are scaled by ``weight`` and accumulated.
    """
    if x.ndim == 3:
        x = x[None]
    enc_training = training and not codebook_only
    y = codec.encode(x, k, enc_training, update_running)
    d = y.shape[-1]
    if bypass_channel:
        y_hat = vq.straight_through(y, y.copy())
        z = z_hat = None
        ser = 0.0
    else:
        rows = y.reshape(-1, d)
        z = vq.quantize(rows, codebook)
        s = ch.modulate(z, constellation)
        s_hat = ch.transmit(s, ch.channel_realization(snr_db, rng))
        z_hat = ch.detect(s_hat, constellation)
        y_hat = vq.straight_through(y, vq.dequantize(z_hat, codebook).reshape(y.shape))
        ser = float(np.mean(z_hat != z))

    terms = vq.vq_losses(y, y_hat)
    if codebook_only:
        total = alpha * terms.codebook_term
        if compute_grads:
            g_rows = (weight * alpha) * vq.codebook_term_grad(y, y_hat).reshape(-1, d)
            vq.accumulate_codebook_grad(codebook, z_hat, g_rows)
        return BandLossTerms(total, 0.0, terms.codebook_term, terms.commitment_term, ser)

    x_hat = codec.decode(y_hat, k, training, update_running)
    recon = mse(x_hat, x)
    total = recon + alpha * terms.codebook_term + beta * terms.commitment_term

    grad_x = None
    if compute_grads:
        g_xhat = (weight * 2.0 / x.size) * (x_hat - x)
        g_st = codec.decode_backward(g_xhat)
        g_y = vq.straight_through_backward(g_st) + (weight * beta) * vq.commitment_term_grad(y, y_hat)
        grad_x = codec.encode_backward(g_y)
        if want_grad_x:
            # the batch is also the regression target, so its total
            # derivative carries the direct term of the reconstruction MSE
            grad_x = grad_x - g_xhat
        if not bypass_channel:
            g_rows = (weight * alpha) * vq.codebook_term_grad(y, y_hat).reshape(-1, d)
            vq.accumulate_codebook_grad(codebook, z_hat, g_rows)
    return BandLossTerms(
        total,
        recon,
        terms.codebook_term,
        terms.commitment_term,
        ser,
        grad_x if want_grad_x else None,
    )


def total_loss(
    system: System,
    x: np.ndarray,
    cfg: TrainConfig,
    etas: list[float],
    rng: np.random.Generator | None,
    training: bool = False,
    compute_grads: bool = False,
    bypass_channel: bool = False,
    update_running: bool = True,
) -> tuple[float, list[float]]:
    """Sum over orders of lambda_k * L_k on one batch, one eta per order."""
    per_band = []
    total = 0.0
    for k in range(1, system.plan.K + 1):
        terms = band_pass(
            system.codec_for(k),
            system.codebook_for(k),
            system.plan.constellation(k),
            x,
            k,
            etas[k - 1],
            cfg.alphas[k - 1],
            cfg.betas[k - 1],
            rng,
            weight=cfg.lambdas[k - 1],
            training=training,
            compute_grads=compute_grads,
            bypass_channel=bypass_channel,
            update_running=update_running,
        )
        per_band.append(terms.total)
        total += cfg.lambdas[k - 1] * terms.total
    return total, per_band


# -- training loops ----------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    band_losses: tuple[float, ...]


@dataclass
class FitResult:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = math.inf
    bands: tuple[int, ...] = ()


def _band_midpoints(policy: ch.SnrPolicy, bands: list[int]) -> dict[int, float]:
    return {k: sum(policy.band(k)) / 2.0 for k in bands}


def _fit(
    system: System,
    dataset: ImageDataset,
    cfg: TrainConfig,
    bands: list[int],
    params: list[Param],
    codebook_only: bool = False,
    alphas: tuple[float, ...] | None = None,
    lambdas: tuple[float, ...] | None = None,
    seed_salt: int = 0,
) -> FitResult:
    """Shared epoch loop: per-iteration band passes, one Adam step, midband
    validation with a fixed noise seed, patience-based early stopping with
    best-weight restore."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    alphas = cfg.alphas if alphas is None else alphas
    lambdas = cfg.lambdas if lambdas is None else lambdas
    train_ds, val_ds = split_train_val(dataset, cfg.val_fraction, cfg.seed)
    opt = Adam(params, lr=cfg.lr)
    train_rng = rng_stream(cfg.seed + seed_salt, STREAM_TRAIN)
    result = FitResult(bands=tuple(bands))
    best_snap = None
    stale = 0
    mids = _band_midpoints(system.plan.policy, bands)

    def run_band(k, batch, eta, rng, training, compute_grads):
        return band_pass(
            system.codec_for(k),
            system.codebook_for(k),
            system.plan.constellation(k),
            batch,
            k,
            eta,
            alphas[k - 1],
            cfg.beta_ratio * alphas[k - 1],
            rng,
            weight=lambdas[k - 1],
            training=training,
            compute_grads=compute_grads,
            update_running=training,
            codebook_only=codebook_only,
        )

    for epoch in range(cfg.max_epochs):
        opt.lr = cfg.lr * 0.5 ** (epoch // cfg.lr_halving_epochs)
        batch_losses = []
        band_sums = {k: [] for k in bands}
        for batch in batches(train_ds, cfg.batch_size, cfg.seed + seed_salt, epoch):
            opt.zero_grad()
            iteration_total = 0.0
            for k in bands:
                lo, hi = system.plan.policy.band(k)
                eta = train_rng.uniform(lo, hi)
                terms = run_band(k, batch, eta, train_rng, True, True)
                iteration_total += lambdas[k - 1] * terms.total
                band_sums[k].append(terms.total)
            opt.step()
            batch_losses.append(iteration_total)

        val_rng = rng_stream(cfg.seed + seed_salt, STREAM_VAL)
        val_total = 0.0
        n_val_batches = 0
        for batch in batches(val_ds, cfg.batch_size, cfg.seed + seed_salt + 1, 0):
            for k in bands:
                terms = run_band(k, batch, mids[k], val_rng, False, False)
                val_total += lambdas[k - 1] * terms.total
            n_val_batches += 1
        val_loss = val_total / max(n_val_batches, 1)

        result.history.append(
            EpochRecord(
                epoch,
                opt.lr,
                float(np.mean(batch_losses)),
                val_loss,
                tuple(float(np.mean(band_sums[k])) for k in bands),
            )
        )
        if val_loss < result.best_val:
            result.best_val = val_loss
            result.best_epoch = epoch
            best_snap = system.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if best_snap is not None:
        system.restore(best_snap)
    return result


def train_ujscc(system: System, dataset: ImageDataset, cfg: TrainConfig) -> FitResult:
    """Joint training over all orders (also serves the single-stage
    model-efficient baseline, which differs only in codec and weights)."""
    bands = list(range(1, system.plan.K + 1))
    return _fit(system, dataset, cfg, bands, system.params())


train_me1 = train_ujscc


def train_me2_stage2(
    system: System, dataset: ImageDataset, cfg: TrainConfig
) -> FitResult:
    """Second stage of the two-stage baseline: the codec is held fixed
    (run in eval mode) and the codebooks below the top order are fitted
    on the codebook loss term alone."""
    if cfg.stage2_alphas is None or cfg.stage2_lambdas is None:
        raise ValueError("stage-2 hyperparameters missing from config")
    K = system.plan.K
    return _fit(
        system,
        dataset,
        cfg,
        bands=list(range(1, K)),
        params=[cb.param for cb in system.codebooks[: K - 1]],
        codebook_only=True,
        alphas=cfg.stage2_alphas + (cfg.alphas[-1],),
        lambdas=cfg.stage2_lambdas + (cfg.lambdas[-1],),
        seed_salt=1,
    )


def train_me2(
    system: System,
    dataset: ImageDataset,
    cfg: TrainConfig,
    stage2_epochs: int | None = None,
) -> dict[str, FitResult]:
    """Two-stage baseline: fit codec + top codebook on the top band, then
    freeze the codec and fit the remaining codebooks on the alpha term only."""
    if system.scheme != "me":
        raise ValueError("two-stage training expects the shared-width codec")
    if cfg.stage2_alphas is None or cfg.stage2_lambdas is None:
        raise ValueError("stage-2 hyperparameters missing from config")
    K = system.plan.K
    stage1 = _fit(
        system,
        dataset,
        cfg,
        bands=[K],
        params=system.codecs[0].params() + [system.codebooks[K - 1].param],
    )
    cfg2 = cfg if stage2_epochs is None else replace(cfg, max_epochs=stage2_epochs)
    return {"stage1": stage1, "stage2": train_me2_stage2(system, dataset, cfg2)}


def train_te(system: System, dataset: ImageDataset, cfg: TrainConfig) -> dict[int, FitResult]:
    """Fit each order's standalone codec and codebook inside its own band."""
    if system.scheme != "te":
        raise ValueError("task-effective training expects the per-order bundle")
    results = {}
    for k in range(1, system.plan.K + 1):
        results[k] = _fit(
            system,
            dataset,
            cfg,
            bands=[k],
            params=system.codecs[k - 1].params() + [system.codebooks[k - 1].param],
            seed_salt=k,
        )
    return results


# -- gradient auditing ---------------------------------------------------------

TINY = ArchitectureConfig("tiny", c1=4, c2=6, dims=(1, 2, 3), n_symbols=256)


def training_graph_gradcheck(
    arch: ArchitectureConfig = TINY,
    scheme: str = "ujscc",
    seed: int = 0,
    batch: int = 2,
    samples: int = 12,
):
    """Finite-difference audit of the whole training graph.

    Channel noise, quantization, and detection are bypassed (y_hat := y,
    straight-through node still in the path), leaving a loss that is an
    exact function of weights and input; every parameter tensor and the
    input image batch are probed against central differences. Batch-norm
    runs in training mode with running-statistic updates held, so batch
    statistics are part of the differentiated graph.
    """
    from ujscc.data import synthetic_dataset
    from ujscc.nn.gradcheck import gradcheck_params

    system = build_system(arch, scheme, seed)
    cfg = TrainConfig(
        alphas=tuple(1.0 + 0.5 * i for i in range(arch.K)),
        lambdas=tuple(1.0 for _ in range(arch.K)),
        seed=seed,
    )
    x_param = Param(synthetic_dataset(batch, seed + 1).images, name="input")
    mids = _band_midpoints(system.plan.policy, list(range(1, arch.K + 1)))
    etas = [mids[k] for k in range(1, arch.K + 1)]

    def loss_fn() -> tuple[float, bytes]:
        total = 0.0
        tags = []
        for k in range(1, arch.K + 1):
            codec = system.codec_for(k)
            terms = band_pass(
                codec,
                system.codebook_for(k),
                system.plan.constellation(k),
                x_param.value,
                k,
                etas[k - 1],
                cfg.alphas[k - 1],
                cfg.betas[k - 1],
                rng=None,
                training=True,
                bypass_channel=True,
                update_running=False,
            )
            total += cfg.lambdas[k - 1] * terms.total
            tags.append(codec.relu_mask_digest())
        return total, b"".join(tags)

    system.zero_grads()
    grad_x_total = np.zeros_like(x_param.value)
    for k in range(1, arch.K + 1):
        terms = band_pass(
            system.codec_for(k),
            system.codebook_for(k),
            system.plan.constellation(k),
            x_param.value,
            k,
            etas[k - 1],
            cfg.alphas[k - 1],
            cfg.betas[k - 1],
            rng=None,
            weight=cfg.lambdas[k - 1],
            training=True,
            compute_grads=True,
            bypass_channel=True,
            update_running=False,
            want_grad_x=True,
        )
        grad_x_total += terms.grad_x

    codec_params = []
    for codec in system.codecs:
        codec_params.extend(codec.params())
    params = codec_params + [x_param]
    analytic = [p.grad for p in codec_params] + [grad_x_total]
    check_rng = rng_stream(seed, STREAM_EVAL)
    return gradcheck_params(
        loss_fn, params, analytic, check_rng, samples=samples, denom_floor=1e-4
    )


# -- evaluation ---------------------------------------------------------------


@dataclass
class SweepRow:
    snr_db: float
    k: int
    modulation: int
    mse: float
    psnr: float
    ssim: float
    ser: float


def evaluate_sweep(
    system: System,
    dataset: ImageDataset,
    snr_grid: list[float],
    trials: int = 1,
    seed: int = 0,
    batch_size: int = 64,
) -> list[SweepRow]:
    """Dataset-averaged reconstruction metrics and SER per SNR point.

    ``trials`` fresh noise realizations are averaged per image; metrics
    are computed per image on [0, 1]-scaled pixels, then averaged.
    """
    rng = rng_stream(seed, STREAM_EVAL)
    rows = []
    for snr_db in snr_grid:
        k = ch.select_order(snr_db, system.plan.policy)
        codec = system.codec_for(k)
        book = system.codebook_for(k)
        const = system.plan.constellation(k)
        mses, psnrs, ssims = [], [], []
        sym_errors = 0
        sym_total = 0
        for lo in range(0, len(dataset), batch_size):
            x = dataset.images[lo : lo + batch_size]
            y = codec.encode(x, k, training=False)
            rows_y = y.reshape(-1, y.shape[-1])
            z = vq.quantize(rows_y, book)
            s = ch.modulate(z, const)
            for _ in range(trials):
                s_hat = ch.transmit(s, ch.channel_realization(snr_db, rng))
                z_hat = ch.detect(s_hat, const)
                sym_errors += int(np.sum(z_hat != z))
                sym_total += z.size
                y_hat = vq.dequantize(z_hat, book).reshape(y.shape)
                x_hat = codec.decode(y_hat, k, training=False)
                for i in range(x.shape[0]):
                    rep = image_report(x[i], x_hat[i])
                    mses.append(rep.mse)
                    psnrs.append(rep.psnr_db)
                    ssims.append(rep.ssim)
        rows.append(
            SweepRow(
                snr_db,
                k,
                system.plan.orders[k - 1],
                float(np.mean(mses)),
                float(np.mean(psnrs)),
                float(np.mean(ssims)),
                sym_errors / max(sym_total, 1),
            )
        )
    return rows
