"""Rebuild pipelines from provenance and reproduce trained models.

The registries are open-world: loader and trainer classes outside this
library can register themselves and then round-trip through configuration
extraction like the built-in ones.  Reproduction re-runs the recorded
pipeline (source, transformations, trainer) and fails loudly if the data
has changed or the resulting provenance hash differs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .core import Dataset, Model, Trainer, build_dataset
from .data import (
    CSV_SOURCE_CLASS,
    CsvDataSource,
    apply_transformers,
    fit_transformers,
    schema_from_properties,
    transform_spec_from_provenance,
)
from .ensemble import ENSEMBLE_TRAINER_CLASS, EnsembleConfig, EnsembleTrainer
from .errors import MissingProperty, ReproductionMismatch, ResourceChanged, UnknownClass
from .optimize import (
    LINEAR_TRAINER_CLASS,
    Adam,
    AdaGrad,
    LinearSgdTrainer,
    OptimizerConfig,
    Sgd,
)
from .provenance import (
    ConfigRecord,
    ConfigRef,
    PBool,
    PFlt,
    PHash,
    PInt,
    PList,
    PMap,
    PObj,
    PStr,
    PTimestamp,
    ProvValue,
    VOLATILE_INSTANCE_KEYS,
    config_section,
    extract_configuration,
    instance_section,
    is_object_provenance,
    provenance_hash,
)
from .rng import to_unsigned64
from .trees import CART_TRAINER_CLASS, CartTrainer, TreeConfig

# ---------------------------------------------------------------------------
# A uniform view over the two configuration carriers
# ---------------------------------------------------------------------------


class _Props:
    """Property access over either a provenance object or a config record."""

    def __init__(self, class_name: str, get, nested, invocation_count: int):
        self.class_name = class_name
        self._get = get
        self.nested = nested  # key -> _Props for object-valued properties
        self.invocation_count = invocation_count

    def raw(self, key: str) -> ProvValue:
        v = self._get(key)
        if v is None:
            raise MissingProperty(key)
        return v

    def value(self, key: str):
        v = self.raw(key)
        if isinstance(v, (PStr, PInt, PFlt, PBool)):
            return v.value
        return v


def _props_from_obj(obj: PObj) -> _Props:
    config = config_section(obj) if is_object_provenance(obj) else obj.fields
    count = 0
    if is_object_provenance(obj):
        recorded = instance_section(obj).get("invocation-count")
        if isinstance(recorded, PInt):
            count = recorded.value

    def nested(key: str) -> _Props:
        v = config.get(key)
        if not isinstance(v, PObj):
            raise MissingProperty(key)
        return _props_from_obj(v)

    return _Props(obj.class_name, config.get, nested, count)


def _props_from_record(record: ConfigRecord, by_name: Mapping[str, ConfigRecord]) -> _Props:
    def nested(key: str) -> _Props:
        v = record.properties.get(key)
        if not isinstance(v, ConfigRef):
            raise MissingProperty(key)
        target = by_name.get(v.name)
        if target is None:
            raise MissingProperty(f"{key} (dangling reference {v.name!r})")
        return _props_from_record(target, by_name)

    return _Props(record.class_name, record.properties.get, nested, 0)


# ---------------------------------------------------------------------------
# Registries
# ---------------------------------------------------------------------------

_LOADER_BUILDERS: dict[str, Callable[[_Props], object]] = {}
_TRAINER_BUILDERS: dict[str, Callable[[_Props], Trainer]] = {}


def register_loader_class(class_name: str, builder: Callable) -> None:
    _LOADER_BUILDERS[class_name] = builder


def register_trainer_class(class_name: str, builder: Callable) -> None:
    _TRAINER_BUILDERS[class_name] = builder


def _build_csv_source(props: _Props) -> CsvDataSource:
    schema_props = props.nested("schema")
    schema = schema_from_properties(
        {key: schema_props.raw(key) for key in ("response-column", "response-type", "columns")}
    )
    return CsvDataSource(props.value("path"), schema)


def _build_linear_trainer(props: _Props) -> LinearSgdTrainer:
    opt = props.nested("optimizer")
    optimizer = _optimizer_from_props(opt)
    return LinearSgdTrainer(
        objective=props.value("objective"),
        optimizer=optimizer,
        epochs=props.value("epochs"),
        batch_size=props.value("batch-size"),
        seed=to_unsigned64(props.value("seed")),
    )


def _optimizer_from_props(props: _Props) -> OptimizerConfig:
    if props.class_name == "pvml.Sgd":
        return Sgd(props.value("lr"))
    if props.class_name == "pvml.AdaGrad":
        return AdaGrad(props.value("lr"), props.value("eps"))
    if props.class_name == "pvml.Adam":
        return Adam(
            props.value("lr"), props.value("beta1"), props.value("beta2"), props.value("eps")
        )
    raise UnknownClass(f"unknown optimizer class {props.class_name!r}")


def _build_cart_trainer(props: _Props) -> CartTrainer:
    return CartTrainer(
        TreeConfig(
            max_depth=props.value("max-depth"),
            min_examples_per_leaf=props.value("min-examples-per-leaf"),
            min_impurity_decrease=props.value("min-impurity-decrease"),
            feature_subsampling_fraction=props.value("feature-subsampling-fraction"),
            split_kind=props.value("split-kind"),
            seed=to_unsigned64(props.value("seed")),
        )
    )


def _build_ensemble_trainer(props: _Props) -> EnsembleTrainer:
    base_props = props.nested("base-trainer")
    base = _trainer_from_props(base_props)
    return EnsembleTrainer(
        EnsembleConfig(
            base_trainer=base,
            num_members=props.value("num-members"),
            seed=to_unsigned64(props.value("seed")),
            sample_fraction=props.value("sample-fraction"),
            with_replacement=props.value("with-replacement"),
            variant=props.value("variant"),
        )
    )


register_loader_class(CSV_SOURCE_CLASS, _build_csv_source)
register_trainer_class(LINEAR_TRAINER_CLASS, _build_linear_trainer)
register_trainer_class(CART_TRAINER_CLASS, _build_cart_trainer)
register_trainer_class(ENSEMBLE_TRAINER_CLASS, _build_ensemble_trainer)


# ---------------------------------------------------------------------------
# Reconstruction
# ---------------------------------------------------------------------------

def reconstruct_source(
    records: Sequence[ConfigRecord], expected_data_hash: str | None = None
):
    """Re-instantiate a data loader from extracted configuration records.

    The first record is the loader itself; later records are referenced
    components (for example the columnar schema).  When
    ``expected_data_hash`` is given, the freshly loaded resource's SHA-256
    must match it or :class:`ResourceChanged` is raised.
    """
    if not records:
        raise UnknownClass("empty configuration")
    root = next((r for r in records if r.class_name in _LOADER_BUILDERS), None)
    if root is None:
        raise UnknownClass(
            f"no registered loader class among: "
            f"{', '.join(sorted({r.class_name for r in records}))}"
        )
    by_name = {r.name: r for r in records}
    source = _LOADER_BUILDERS[root.class_name](_props_from_record(root, by_name))
    if expected_data_hash is not None:
        actual = instance_section(source.provenance).get("data-hash")
        if not isinstance(actual, PHash) or actual.digest != expected_data_hash:
            got = actual.digest if isinstance(actual, PHash) else "<none>"
            raise ResourceChanged(
                f"data at the recorded location changed: expected sha256 "
                f"{expected_data_hash}, found {got}"
            )
    return source


def _trainer_from_props(props: _Props) -> Trainer:
    builder = _TRAINER_BUILDERS.get(props.class_name)
    if builder is None:
        raise UnknownClass(f"trainer class {props.class_name!r} is not registered")
    trainer = builder(props)
    trainer.set_invocation_count(props.invocation_count)
    return trainer


def reconstruct_trainer(spec: PObj | Sequence[ConfigRecord]) -> Trainer:
    """Rebuild a trainer from its provenance or from configuration records.

    From provenance, the invocation counter (including that of any nested
    base trainer) is advanced to the recorded train-time value so the
    reproduced call consumes the same random stream position.  From
    configuration records the counters start at zero.
    """
    if isinstance(spec, PObj):
        return _trainer_from_props(_props_from_obj(spec))
    records = list(spec)
    if not records:
        raise UnknownClass("empty configuration")
    # a document extracted from a whole model starts at the model record;
    # the first registered trainer class in visit order is the right root
    root = next((r for r in records if r.class_name in _TRAINER_BUILDERS), None)
    if root is None:
        raise UnknownClass(
            f"no registered trainer class among: "
            f"{', '.join(sorted({r.class_name for r in records}))}"
        )
    by_name = {r.name: r for r in records}
    return _trainer_from_props(_props_from_record(root, by_name))


def rebuild_dataset(data_prov: PObj) -> Dataset:
    """Source + recorded transformations -> the dataset a model trained on."""
    inst = instance_section(data_prov)
    source_prov = inst.get("source")
    if not isinstance(source_prov, PObj):
        raise MissingProperty("source")
    expected = instance_section(source_prov).get("data-hash")
    digest = expected.digest if isinstance(expected, PHash) else None
    source = reconstruct_source(extract_configuration(source_prov), expected_data_hash=digest)
    dataset = build_dataset(source)
    transformations = inst.get("transformations", PList())
    for tprov in transformations.items:
        spec = transform_spec_from_provenance(tprov)
        dataset = apply_transformers(dataset, fit_transformers(dataset, spec))
    return dataset


def reproduce_model(model_prov: PObj) -> Model:
    """Re-run the recorded pipeline and verify it lands on the same model.

    Raises :class:`ResourceChanged` when the training data differs from the
    recorded hash and :class:`ReproductionMismatch` when the rebuilt
    model's non-volatile provenance hash differs from the original's.
    """
    trainer_prov = config_section(model_prov).get("trainer")
    data_prov = instance_section(model_prov).get("data")
    if not isinstance(trainer_prov, PObj) or not isinstance(data_prov, PObj):
        raise MissingProperty("trainer/data")
    dataset = rebuild_dataset(data_prov)
    trainer = reconstruct_trainer(trainer_prov)
    model = trainer.train(dataset)
    original = provenance_hash(model_prov)
    rebuilt = provenance_hash(model.provenance)
    if original != rebuilt:
        raise ReproductionMismatch(
            f"reproduced model hash {rebuilt} differs from original {original}"
        )
    return model


# ---------------------------------------------------------------------------
# Provenance diff
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffEntry:
    path: str
    left: ProvValue | None
    right: ProvValue | None
    volatile: bool


def diff_provenance(a: ProvValue, b: ProvValue) -> list[DiffEntry]:
    """Deterministic structural diff; volatile fields are tagged, not hidden."""
    entries: list[DiffEntry] = []

    def join(path: str, part: str) -> str:
        return f"{path}/{part}" if path else part

    def leaf_volatile(x, y) -> bool:
        return isinstance(x, PTimestamp) or isinstance(y, PTimestamp)

    def walk(x: ProvValue | None, y: ProvValue | None, path: str, volatile: bool) -> None:
        if x is None or y is None or type(x) is not type(y):
            if x != y:
                entries.append(DiffEntry(path, x, y, volatile or leaf_volatile(x, y)))
            return
        if isinstance(x, PObj):
            if x.class_name != y.class_name:
                entries.append(
                    DiffEntry(join(path, "class-name"), PStr(x.class_name), PStr(y.class_name), volatile)
                )
            if is_object_provenance(x) and is_object_provenance(y):
                walk(config_section(x), config_section(y), join(path, "config"), volatile)
                walk_instance(instance_section(x), instance_section(y), join(path, "instance"), volatile)
            else:
                walk(x.fields, y.fields, path, volatile)
            return
        if isinstance(x, PMap):
            for key in sorted(set(x.keys()) | set(y.keys())):
                walk(x.get(key), y.get(key), join(path, key), volatile)
            return
        if isinstance(x, PList):
            for i in range(max(len(x.items), len(y.items))):
                xi = x.items[i] if i < len(x.items) else None
                yi = y.items[i] if i < len(y.items) else None
                walk(xi, yi, join(path, str(i)), volatile)
            return
        if x != y:
            entries.append(DiffEntry(path, x, y, volatile or leaf_volatile(x, y)))

    def walk_instance(x: PMap, y: PMap, path: str, volatile: bool) -> None:
        for key in sorted(set(x.keys()) | set(y.keys())):
            child_volatile = volatile or key in VOLATILE_INSTANCE_KEYS
            walk(x.get(key), y.get(key), join(path, key), child_volatile)

    walk(a, b, "", False)
    return entries
