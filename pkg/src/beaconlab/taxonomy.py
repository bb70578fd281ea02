"""Beacon vector classes, providers, property profiles and fleet generation."""

from __future__ import annotations

import base64
import json
import re
import uuid
from dataclasses import asdict, dataclass, field
from enum import Enum
from importlib import resources
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError
from .seeding import child_rng


class VectorClass(str, Enum):
    """The six beacon vector classes, in declaration order."""

    S3_PRESIGNED_URL = "S3PresignedUrl"
    CONTAINER_IMAGE = "ContainerImage"
    IAM_CANARY_ROLE = "IamCanaryRole"
    TERRAFORM_MODULE = "TerraformModule"
    K8S_SECRET = "K8sSecret"
    SERVERLESS_TRIGGER = "ServerlessTrigger"

    @property
    def slug(self) -> str:
        return _SLUGS[self]


class CloudProvider(str, Enum):
    AWS = "AWS"
    GCP = "GCP"
    AZURE = "Azure"
    OCI = "OCI"


_SLUGS = {
    VectorClass.S3_PRESIGNED_URL: "s3url",
    VectorClass.CONTAINER_IMAGE: "image",
    VectorClass.IAM_CANARY_ROLE: "iamrole",
    VectorClass.TERRAFORM_MODULE: "tfmod",
    VectorClass.K8S_SECRET: "k8ssecret",
    VectorClass.SERVERLESS_TRIGGER: "fn",
}

VECTORS: tuple[VectorClass, ...] = tuple(VectorClass)
PROVIDERS: tuple[CloudProvider, ...] = tuple(CloudProvider)


@dataclass(frozen=True)
class PropertyProfile:
    inherent_ephemeral_risk: float
    stealth: float
    iam_complexity: float
    multi_cloud_support: float
    ttd_efficiency: float

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"property {name}={value} outside [0, 1]")


# Inherent ephemeral risk is fixed per class. The remaining radar axes only
# feed reporting; they respect the qualitative ordering of the radar figure
# (IAM canary most balanced, K8s lowest multi-cloud, S3 low risk + high
# multi-cloud) and can be overridden from the ``taxonomy`` config section.
INHERENT_EPHEMERAL_RISK: Mapping[VectorClass, float] = {
    VectorClass.S3_PRESIGNED_URL: 0.10,
    VectorClass.CONTAINER_IMAGE: 0.45,
    VectorClass.IAM_CANARY_ROLE: 0.05,
    VectorClass.TERRAFORM_MODULE: 0.30,
    VectorClass.K8S_SECRET: 0.65,
    VectorClass.SERVERLESS_TRIGGER: 0.55,
}

DEFAULT_RADAR: Mapping[VectorClass, Mapping[str, float]] = {
    VectorClass.S3_PRESIGNED_URL: {"stealth": 0.85, "iam_complexity": 0.30, "multi_cloud_support": 0.80, "ttd_efficiency": 0.70},
    VectorClass.CONTAINER_IMAGE: {"stealth": 0.60, "iam_complexity": 0.25, "multi_cloud_support": 0.75, "ttd_efficiency": 0.65},
    VectorClass.IAM_CANARY_ROLE: {"stealth": 0.80, "iam_complexity": 0.70, "multi_cloud_support": 0.80, "ttd_efficiency": 0.62},
    VectorClass.TERRAFORM_MODULE: {"stealth": 0.55, "iam_complexity": 0.40, "multi_cloud_support": 0.70, "ttd_efficiency": 0.60},
    VectorClass.K8S_SECRET: {"stealth": 0.55, "iam_complexity": 0.45, "multi_cloud_support": 0.30, "ttd_efficiency": 0.55},
    VectorClass.SERVERLESS_TRIGGER: {"stealth": 0.35, "iam_complexity": 0.35, "multi_cloud_support": 0.55, "ttd_efficiency": 0.70},
}

_profile_overrides: dict[VectorClass, dict[str, float]] = {}


def set_radar_overrides(overrides: Mapping[VectorClass, Mapping[str, float]]) -> None:
    """Install radar-axis overrides (inherent ephemeral risk is not overridable)."""
    _profile_overrides.clear()
    for vector, values in overrides.items():
        unknown = set(values) - set(DEFAULT_RADAR[vector])
        if unknown:
            raise ConfigError(f"unknown radar properties for {vector.value}: {sorted(unknown)}")
        _profile_overrides[vector] = dict(values)


def property_profile(vector: VectorClass) -> PropertyProfile:
    radar = dict(DEFAULT_RADAR[vector])
    radar.update(_profile_overrides.get(vector, {}))
    return PropertyProfile(inherent_ephemeral_risk=INHERENT_EPHEMERAL_RISK[vector], **radar)


_ALL = frozenset(PROVIDERS)
_NO_OCI = frozenset({CloudProvider.AWS, CloudProvider.GCP, CloudProvider.AZURE})
_SUPPORT: Mapping[VectorClass, frozenset[CloudProvider]] = {
    VectorClass.S3_PRESIGNED_URL: _NO_OCI,
    VectorClass.CONTAINER_IMAGE: _ALL,
    VectorClass.IAM_CANARY_ROLE: _ALL,
    VectorClass.TERRAFORM_MODULE: _ALL,
    VectorClass.K8S_SECRET: _NO_OCI,
    VectorClass.SERVERLESS_TRIGGER: _NO_OCI,
}


def applicability_matrix() -> frozenset[tuple[VectorClass, CloudProvider]]:
    return frozenset((v, p) for v in VECTORS for p in PROVIDERS if p in _SUPPORT[v])


def matrix_pairs() -> list[tuple[VectorClass, CloudProvider]]:
    """Applicability pairs in canonical (vector, provider) declaration order."""
    return [(v, p) for v in VECTORS for p in PROVIDERS if p in _SUPPORT[v]]


# --- organisation contexts -------------------------------------------------


@dataclass(frozen=True)
class OrgContext:
    label: str
    org_slug: str
    domain: str
    callback_host: str
    sector: str
    services: tuple[str, ...]
    regions: Mapping[CloudProvider, tuple[str, ...]] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, label: str, raw: Mapping) -> "OrgContext":
        expected = {"org_slug", "domain", "callback_host", "sector", "services", "regions"}
        unknown = set(raw) - expected
        if unknown:
            raise ConfigError(f"context {label!r}: unknown keys {sorted(unknown)}")
        missing = expected - set(raw)
        if missing:
            raise ConfigError(f"context {label!r}: missing keys {sorted(missing)}")
        try:
            regions = {CloudProvider(k): tuple(v) for k, v in raw["regions"].items()}
        except ValueError as exc:
            raise ConfigError(f"context {label!r}: {exc}") from None
        for p in PROVIDERS:
            if not regions.get(p):
                raise ConfigError(f"context {label!r}: no regions for provider {p.value}")
        if not raw["services"]:
            raise ConfigError(f"context {label!r}: services list is empty")
        return cls(
            label=label,
            org_slug=str(raw["org_slug"]),
            domain=str(raw["domain"]),
            callback_host=str(raw["callback_host"]),
            sector=str(raw["sector"]),
            services=tuple(raw["services"]),
            regions=regions,
        )

    def to_dict(self) -> dict:
        return {
            "org_slug": self.org_slug,
            "domain": self.domain,
            "callback_host": self.callback_host,
            "sector": self.sector,
            "services": list(self.services),
            "regions": {p.value: list(r) for p, r in self.regions.items()},
        }


def bundled_contexts() -> dict[str, OrgContext]:
    text = resources.files("beaconlab.data").joinpath("contexts.json").read_text()
    raw = json.loads(text)
    return {label: OrgContext.from_dict(label, body) for label, body in raw["contexts"].items()}


DEFAULT_CONTEXT = "payflow.io"


# --- beacon instances --------------------------------------------------------


@dataclass(frozen=True)
class BeaconInstance:
    id: str
    vector: VectorClass
    provider: CloudProvider
    context_label: str
    artifact_descriptor: str
    created_at: float = 0.0

    def __post_init__(self) -> None:
        if (self.vector, self.provider) not in applicability_matrix():
            raise ConfigError(f"{self.vector.value} is not deployable on {self.provider.value}")
        if not self.artifact_descriptor:
            raise ConfigError(f"beacon {self.id}: empty artifact descriptor")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "vector": self.vector.value,
            "provider": self.provider.value,
            "context_label": self.context_label,
            "artifact_descriptor": self.artifact_descriptor,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "BeaconInstance":
        return cls(
            id=raw["id"],
            vector=VectorClass(raw["vector"]),
            provider=CloudProvider(raw["provider"]),
            context_label=raw["context_label"],
            artifact_descriptor=raw["artifact_descriptor"],
            created_at=float(raw.get("created_at", 0.0)),
        )


_HEX = "0123456789abcdef"
_LOWER_ALNUM = "abcdefghijklmnopqrstuvwxyz0123456789"
_UPPER_ALNUM = "ABCDEFGHIJKLMNOPQRSTUVWXYZ234567"


class _Draw:
    """Small convenience wrapper over a numpy generator for template fields."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def chars(self, alphabet: str, n: int) -> str:
        idx = self.rng.integers(0, len(alphabet), size=n)
        return "".join(alphabet[i] for i in idx)

    def digits(self, n: int) -> str:
        first = str(int(self.rng.integers(1, 10)))
        return first + self.chars("0123456789", n - 1)

    def pick(self, options):
        return options[int(self.rng.integers(0, len(options)))]

    def uuid(self) -> str:
        return str(uuid.UUID(bytes=self.rng.bytes(16), version=4))

    def b64(self, nbytes: int) -> str:
        return base64.b64encode(self.rng.bytes(nbytes)).decode("ascii")


def _token(draw: _Draw) -> str:
    return draw.chars(_LOWER_ALNUM, 16)


def _callback_url(ctx: OrgContext, draw: _Draw, kind: str) -> str:
    return f"https://{ctx.callback_host}/v1/{kind}/{_token(draw)}"


def _render_s3(ctx: OrgContext, provider: CloudProvider, draw: _Draw, service: str) -> str:
    region = draw.pick(ctx.regions[provider])
    bucket = f"{ctx.org_slug}-{service}-exports"
    key = f"{service}/reports/{draw.chars(_LOWER_ALNUM, 8)}.csv"
    expires = 604800
    stamp = f"2025{int(draw.rng.integers(1, 13)):02d}{int(draw.rng.integers(1, 29)):02d}T{int(draw.rng.integers(0, 24)):02d}0000Z"
    if provider is CloudProvider.AWS:
        akid = "AKIA" + draw.chars(_UPPER_ALNUM, 16)
        return (
            f"https://{bucket}.s3.{region}.amazonaws.com/{key}"
            f"?X-Amz-Algorithm=AWS4-HMAC-SHA256"
            f"&X-Amz-Credential={akid}%2F{stamp[:8]}%2F{region}%2Fs3%2Faws4_request"
            f"&X-Amz-Date={stamp}&X-Amz-Expires={expires}&X-Amz-SignedHeaders=host"
            f"&X-Amz-Signature={draw.chars(_HEX, 64)}"
        )
    if provider is CloudProvider.GCP:
        sa = f"{service}-reader%40{ctx.org_slug}-prod.iam.gserviceaccount.com"
        return (
            f"https://storage.googleapis.com/{bucket}/{key}"
            f"?X-Goog-Algorithm=GOOG4-RSA-SHA256"
            f"&X-Goog-Credential={sa}%2F{stamp[:8]}%2F{region}%2Fstorage%2Fgoog4_request"
            f"&X-Goog-Date={stamp}&X-Goog-Expires={expires}&X-Goog-SignedHeaders=host"
            f"&X-Goog-Signature={draw.chars(_HEX, 128)}"
        )
    account = f"{ctx.org_slug}{draw.chars(_LOWER_ALNUM, 6)}"
    expiry = f"2026-{int(draw.rng.integers(1, 13)):02d}-{int(draw.rng.integers(1, 29)):02d}T00:00:00Z"
    sig = draw.b64(32).replace("+", "%2B").replace("/", "%2F").replace("=", "%3D")
    return (
        f"https://{account}.blob.core.windows.net/{service}-exports/{key}"
        f"?sv=2022-11-02&st={stamp[:4]}-01-01T00:00:00Z&se={expiry}&sr=b&sp=r&sig={sig}"
    )


def _render_image(ctx: OrgContext, provider: CloudProvider, draw: _Draw, service: str) -> str:
    region = draw.pick(ctx.regions[provider])
    if provider is CloudProvider.AWS:
        registry = f"{draw.digits(12)}.dkr.ecr.{region}.amazonaws.com"
    elif provider is CloudProvider.GCP:
        registry = f"{region}-docker.pkg.dev/{ctx.org_slug}-prod/containers"
    elif provider is CloudProvider.AZURE:
        registry = f"{ctx.org_slug}prod.azurecr.io"
    else:
        registry = f"{region}.ocir.io/{ctx.org_slug}{draw.chars(_LOWER_ALNUM, 6)}"
    digest = draw.chars(_HEX, 64)
    image = f"{registry}/{service}:1.{int(draw.rng.integers(0, 20))}.{int(draw.rng.integers(0, 10))}@sha256:{digest}"
    return (
        f"FROM {image}\n"
        f"HEALTHCHECK --interval=300s CMD wget -q -O /dev/null {_callback_url(ctx, draw, 'img')} || true\n"
    )


def _render_iam(ctx: OrgContext, provider: CloudProvider, draw: _Draw, service: str) -> str:
    name = f"{service}-breakglass-{draw.chars(_LOWER_ALNUM, 4)}"
    if provider is CloudProvider.AWS:
        return f"arn:aws:iam::{draw.digits(12)}:role/{name}"
    if provider is CloudProvider.GCP:
        return f"{name[:30].rstrip('-')}@{ctx.org_slug}-prod.iam.gserviceaccount.com"
    if provider is CloudProvider.AZURE:
        return (
            f"/subscriptions/{draw.uuid()}/resourceGroups/rg-{ctx.org_slug}-prod"
            f"/providers/Microsoft.ManagedIdentity/userAssignedIdentities/{name}"
        )
    return f"ocid1.dynamicgroup.oc1..aaaaaaaa{draw.chars(_LOWER_ALNUM, 52)}"


_TF_PROVIDER = {
    CloudProvider.AWS: "aws",
    CloudProvider.GCP: "google",
    CloudProvider.AZURE: "azurerm",
    CloudProvider.OCI: "oci",
}


def _render_terraform(ctx: OrgContext, provider: CloudProvider, draw: _Draw, service: str) -> str:
    mod = service.replace("-", "_")
    tfp = _TF_PROVIDER[provider]
    return (
        f'module "{mod}_baseline" {{\n'
        f'  source  = "app.terraform.io/{ctx.org_slug}/{service}-baseline/{tfp}"\n'
        f'  version = "~> 2.{int(draw.rng.integers(0, 9))}"\n'
        f"}}\n\n"
        f'data "http" "{mod}_license_check" {{\n'
        f'  url = "{_callback_url(ctx, draw, "tf")}"\n'
        f"}}\n"
    )


_K8S_FLAVOUR = {CloudProvider.AWS: "eks", CloudProvider.GCP: "gke", CloudProvider.AZURE: "aks"}


def _render_k8s(ctx: OrgContext, provider: CloudProvider, draw: _Draw, service: str) -> str:
    secret = base64.b64encode(f"postgres://{service}:{draw.chars(_LOWER_ALNUM, 20)}@db".encode()).decode()
    return (
        "apiVersion: v1\n"
        "kind: Secret\n"
        "metadata:\n"
        f"  name: {service}-db-credentials\n"
        f"  namespace: {service}\n"
        "  annotations:\n"
        f"    {ctx.domain}/cluster: {_K8S_FLAVOUR[provider]}-{ctx.org_slug}-prod\n"
        f"    {ctx.domain}/rotation-callback: {_callback_url(ctx, draw, 'k8s')}\n"
        "type: Opaque\n"
        "data:\n"
        f"  DATABASE_URL: {secret}\n"
    )


def _render_function(ctx: OrgContext, provider: CloudProvider, draw: _Draw, service: str) -> str:
    url = _callback_url(ctx, draw, "fn")
    if provider is CloudProvider.AWS:
        sig = "def handler(event, context):"
        ctx_expr = "json.dumps(event)"
    elif provider is CloudProvider.GCP:
        sig = "def main(request):"
        ctx_expr = "json.dumps(dict(request.headers))"
    else:
        sig = "def main(req):"
        ctx_expr = "json.dumps(dict(req.headers))"
    return (
        f"# {service} legacy reconciliation hook (deprecated)\n"
        "import json\nimport urllib.request\n\n"
        f"{sig}\n"
        f"    urllib.request.urlopen(urllib.request.Request({url!r}, data={ctx_expr}.encode()))\n"
        "    return {'statusCode': 410}\n"
    )


_RENDERERS = {
    VectorClass.S3_PRESIGNED_URL: _render_s3,
    VectorClass.CONTAINER_IMAGE: _render_image,
    VectorClass.IAM_CANARY_ROLE: _render_iam,
    VectorClass.TERRAFORM_MODULE: _render_terraform,
    VectorClass.K8S_SECRET: _render_k8s,
    VectorClass.SERVERLESS_TRIGGER: _render_function,
}


_CB = r"https://[a-z0-9.-]+/v1/{kind}/[a-z0-9]{{16}}"
_FORMAT_RULES: dict[tuple[VectorClass, CloudProvider], re.Pattern] = {
    (VectorClass.S3_PRESIGNED_URL, CloudProvider.AWS): re.compile(
        r"^https://[a-z0-9.-]+\.s3\.[a-z0-9-]+\.amazonaws\.com/\S+\?X-Amz-Algorithm=AWS4-HMAC-SHA256"
        r"&X-Amz-Credential=AKIA[A-Z2-7]{16}%2F\d{8}%2F[a-z0-9-]+%2Fs3%2Faws4_request"
        r"&X-Amz-Date=\d{8}T\d{6}Z&X-Amz-Expires=\d+&X-Amz-SignedHeaders=host&X-Amz-Signature=[0-9a-f]{64}$"
    ),
    (VectorClass.S3_PRESIGNED_URL, CloudProvider.GCP): re.compile(
        r"^https://storage\.googleapis\.com/\S+\?X-Goog-Algorithm=GOOG4-RSA-SHA256&X-Goog-Credential=\S+"
        r"&X-Goog-Date=\d{8}T\d{6}Z&X-Goog-Expires=\d+&X-Goog-SignedHeaders=host&X-Goog-Signature=[0-9a-f]{128}$"
    ),
    (VectorClass.S3_PRESIGNED_URL, CloudProvider.AZURE): re.compile(
        r"^https://[a-z0-9]+\.blob\.core\.windows\.net/\S+\?sv=\d{4}-\d{2}-\d{2}&st=\S+"
        r"&se=\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z&sr=b&sp=r&sig=\S+$"
    ),
    (VectorClass.IAM_CANARY_ROLE, CloudProvider.AWS): re.compile(r"^arn:aws:iam::\d{12}:role/[\w+=,.@-]{1,64}$"),
    (VectorClass.IAM_CANARY_ROLE, CloudProvider.GCP): re.compile(
        r"^[a-z][a-z0-9-]{4,28}[a-z0-9]@[a-z][a-z0-9-]+\.iam\.gserviceaccount\.com$"
    ),
    (VectorClass.IAM_CANARY_ROLE, CloudProvider.AZURE): re.compile(
        r"^/subscriptions/[0-9a-f-]{36}/resourceGroups/[\w.-]+/providers/"
        r"Microsoft\.ManagedIdentity/userAssignedIdentities/[\w-]+$"
    ),
    (VectorClass.IAM_CANARY_ROLE, CloudProvider.OCI): re.compile(r"^ocid1\.dynamicgroup\.oc1\.\.[a-z0-9]{60}$"),
}
for _p in PROVIDERS:
    _FORMAT_RULES[(VectorClass.CONTAINER_IMAGE, _p)] = re.compile(
        r"^FROM \S+/[a-z0-9-]+:\d+\.\d+\.\d+@sha256:[0-9a-f]{64}\n"
        r"HEALTHCHECK --interval=\d+s CMD wget -q -O /dev/null " + _CB.format(kind="img") + r" \|\| true\n$"
    )
    _FORMAT_RULES[(VectorClass.TERRAFORM_MODULE, _p)] = re.compile(
        r'^module "\w+" \{\n  source  = "[\w./-]+/' + _TF_PROVIDER[_p] + r'"\n  version = "[^"]+"\n\}\n\n'
        r'data "http" "\w+" \{\n  url = "' + _CB.format(kind="tf") + r'"\n\}\n$'
    )
for _p in _NO_OCI:
    _FORMAT_RULES[(VectorClass.K8S_SECRET, _p)] = re.compile(
        r"^apiVersion: v1\nkind: Secret\nmetadata:\n  name: [a-z0-9-]+\n  namespace: [a-z0-9-]+\n"
        r"  annotations:\n    \S+/cluster: " + _K8S_FLAVOUR[_p] + r"-[a-z0-9-]+\n"
        r"    \S+/rotation-callback: " + _CB.format(kind="k8s") + r"\n"
        r"type: Opaque\ndata:\n  [A-Z_]+: [A-Za-z0-9+/=]+\n$"
    )
    _FORMAT_RULES[(VectorClass.SERVERLESS_TRIGGER, _p)] = re.compile(
        r"^# .+\nimport json\nimport urllib\.request\n\ndef (handler\(event, context\)|main\(\w+\)):\n"
        r"    urllib\.request\.urlopen\(urllib\.request\.Request\('" + _CB.format(kind="fn") + r"', data=.+\)\)\n"
        r"    return \{'statusCode': 410\}\n$"
    )


def validate_descriptor(vector: VectorClass, provider: CloudProvider, descriptor: str) -> bool:
    """Syntactic format check for a rendered artifact descriptor."""
    rule = _FORMAT_RULES.get((vector, provider))
    return bool(rule and rule.match(descriptor))


def generate_fleet(
    seed: int,
    context_label: str = DEFAULT_CONTEXT,
    contexts: Mapping[str, OrgContext] | None = None,
) -> list[BeaconInstance]:
    """One beacon per applicability pair, rendered from the organisation context."""
    if not context_label:
        raise ConfigError("context label must be non-empty")
    contexts = bundled_contexts() if contexts is None else contexts
    if context_label not in contexts:
        raise ConfigError(f"unknown context {context_label!r} (known: {sorted(contexts)})")
    ctx = contexts[context_label]
    fleet = []
    for index, (vector, provider) in enumerate(matrix_pairs()):
        draw = _Draw(child_rng(seed, "fleet", context_label, vector.value, provider.value))
        service = draw.pick(ctx.services)
        descriptor = _RENDERERS[vector](ctx, provider, draw, service)
        if not validate_descriptor(vector, provider, descriptor):
            raise AssertionError(f"rendered descriptor fails its format rule: {vector.value}/{provider.value}")
        fleet.append(
            BeaconInstance(
                id=f"{vector.slug}-{provider.value.lower()}-{index:02d}",
                vector=vector,
                provider=provider,
                context_label=context_label,
                artifact_descriptor=descriptor,
            )
        )
    return fleet


def fleet_to_jsonl(fleet: Iterable[BeaconInstance]) -> str:
    return "".join(json.dumps(b.to_dict(), sort_keys=True) + "\n" for b in fleet)


def fleet_from_jsonl(text: str) -> list[BeaconInstance]:
    return [BeaconInstance.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
