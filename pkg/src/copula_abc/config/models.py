"""Pydantic V2 модели для валидации конфигурации (только BaseModel)."""
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from copula_abc.core.adjacency import MODEL_PRESETS

FAMILIES = {"nb-hurdle", "poisson-hurdle", "plain-nb"}


class LoggingConfig(BaseModel):
    """Конфигурация логирования."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    level: Literal["debug", "info", "warning", "error", "critical"] = Field(
        default="info",
        description="Уровень логирования"
    )
    log_dir: str = Field(
        default="logs",
        description="Директория для логов"
    )
    max_log_days: int = Field(
        default=7,
        ge=1,
        description="Дней хранения ротированных логов"
    )
    console: bool = Field(
        default=True,
        description="Дублировать лог в консоль"
    )

    @field_validator("level", mode="before")
    @classmethod
    def validate_level(cls, v: str) -> str:
        if isinstance(v, str):
            v = v.lower()
        allowed = {"debug", "info", "warning", "error", "critical"}
        if v not in allowed:
            raise ValueError(f"Уровень логирования должен быть одним из: {allowed}")
        return v


class TruthConfig(BaseModel):
    """Истинные параметры для генерации данных; пустые поля берутся из DEFAULT_TRUTH."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    alpha: list[float] | None = Field(default=None, description="Коэффициенты присутствия α")
    beta: list[float] | None = Field(default=None, description="Коэффициенты тяжести β")
    phi: float | None = Field(default=None, gt=0.0, description="Размер NB φ")
    preset: str | None = Field(default=None, description="Модель зависимости истины (M0–M8)")
    rho: dict[str, float] | None = Field(default=None, description="Коэффициенты SAR по именам смежностей")


class ModelConfig(BaseModel):
    """Маргинальное семейство и дизайн исследования."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    family: Literal["nb-hurdle", "poisson-hurdle", "plain-nb"] = Field(
        default="nb-hurdle",
        description="Семейство маргинальных распределений"
    )
    n_individuals: int = Field(default=728, ge=1, description="Число индивидов дизайна")
    ages: list[int] = Field(default=[5, 9, 13, 17, 23], min_length=1, description="Возрасты обследований")
    design_seed: int = Field(default=2024, ge=0, description="Seed генерации дизайна")
    predictors_file: str | None = Field(
        default=None,
        description="Таблица предикторов (individual,margin,x1..xd); заменяет сгенерированный дизайн"
    )
    truth: TruthConfig = Field(default_factory=TruthConfig)

    @field_validator("family", mode="before")
    @classmethod
    def validate_family(cls, v: str) -> str:
        if isinstance(v, str):
            v = v.lower().replace("_", "-")
        if v not in FAMILIES:
            raise ValueError(f"Семейство должно быть одним из: {FAMILIES}")
        return v


class AdjacencyEntry(BaseModel):
    """Отношение соседства, заданное списком пар в конфигурации."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    name: str = Field(..., min_length=1)
    pairs: list[tuple[int, int]] = Field(default_factory=list)


class AdjacencyConfig(BaseModel):
    """Источник смежностей и упорядоченный список, к которому привязан вектор ρ."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    preset: str | None = Field(default="M4", description="Модель M0–M8 из каталога")
    names: list[str] | None = Field(
        default=None,
        description="Явный порядок смежностей (переопределяет preset)"
    )
    inline: list[AdjacencyEntry] = Field(default_factory=list, description="Смежности, заданные парами")
    edge_list: str | None = Field(default=None, description="Файл 'name j j' с каталогом смежностей")

    @field_validator("preset", mode="before")
    @classmethod
    def validate_preset(cls, v: str | None) -> str | None:
        if v is None:
            return v
        v = str(v).upper()
        if v not in MODEL_PRESETS:
            raise ValueError(f"Модель должна быть одной из: {sorted(MODEL_PRESETS)}")
        return v


class PriorConfig(BaseModel):
    """Гиперпараметры априорного распределения."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    c_alpha: float = Field(default=2.0, gt=0.0, description="sd свободного члена α")
    c_beta: float = Field(default=2.0, gt=0.0, description="sd свободного члена β")
    c_phi: float = Field(default=2.0, gt=0.0, description="sd log φ")
    lambda_alpha: float = Field(default=1.0, gt=0.0, description="λ normal-gamma для α")
    lambda_beta: float = Field(default=1.0, gt=0.0, description="λ normal-gamma для β")
    tau2_alpha: float = Field(default=1.0, gt=0.0, description="Начальное τ²_α")
    tau2_beta: float = Field(default=1.0, gt=0.0, description="Начальное τ²_β")
    tau2_proposal_sd: float = Field(default=0.3, gt=0.0, description="sd MH-шага по log τ²")


class ABCConfig(BaseModel):
    """Параметры инициализации, сэмплеров и коррекции."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    h: float = Field(default=10.0, gt=0.0, description="Ширина ядра K_h(Δ) = exp(−Δ/h)")
    chains: int = Field(default=3, ge=1)
    iters: int = Field(default=20_000, ge=1)
    burnin: int = Field(default=5_000, ge=0)
    thin: int = Field(default=1, ge=1, description="Шаг прореживания архива")
    thin_size: int | None = Field(default=3_000, ge=1, description="Размер выборки на цепочку после коррекции")
    target_acceptance: float = Field(default=0.1, gt=0.0, lt=1.0)
    adaptation_switch: int = Field(default=500, ge=1)
    log_every: int = Field(default=1_000, ge=1)

    scaling_G: int = Field(default=10_000, ge=2, description="Симуляций для оценки A")
    init_G: int = Field(default=10_000, ge=2, description="Симуляций для инициализации θ_D")
    init_keep: float = Field(default=0.01, gt=0.0, le=1.0)
    gibbs_iters: int = Field(default=20_000, ge=2)
    gibbs_burnin: int = Field(default=5_000, ge=0)
    mh_width: float = Field(default=0.5, gt=0.0, description="Полуширина l сдвига (β₀, log φ)")
    quantile_cap: int = Field(default=1_000_000, ge=1)

    rejection_G: int = Field(default=250_000, ge=1)
    rejection_keep: float = Field(default=0.001, gt=0.0, le=1.0)
    importance_G: int = Field(default=250_000, ge=1)
    importance_inflation: float = Field(default=4.0, gt=0.0, description="c² в MVN(θ̃, c²Σ̃)")

    adjustment_mode: Literal["direct", "indirect"] = Field(default="direct")
    noise: bool = Field(default=False, description="Коррекция с шумом вместо дедупликации")
    r_pairs: list[tuple[int, int]] | None = Field(
        default=None,
        description="Пары маргиналей для R-оценок; по умолчанию представительные пары θ_R"
    )
    n_rep: int = Field(default=1_000, ge=1, description="Репликатов апостериорной предсказательной проверки")
    min_pairs: int = Field(default=100, ge=1, description="Мин. пар наблюдений для ppp-гистограммы")

    @field_validator("adjustment_mode", mode="before")
    @classmethod
    def validate_mode(cls, v: str) -> str:
        if isinstance(v, str):
            v = v.lower()
        if v not in {"direct", "indirect"}:
            raise ValueError("Режим коррекции должен быть 'direct' или 'indirect'")
        return v

    @model_validator(mode="after")
    def check_burnin(self) -> "ABCConfig":
        if self.burnin >= self.iters:
            raise ValueError(f"burnin ({self.burnin}) должен быть меньше iters ({self.iters})")
        if self.gibbs_burnin >= self.gibbs_iters:
            raise ValueError(f"gibbs_burnin ({self.gibbs_burnin}) должен быть меньше gibbs_iters ({self.gibbs_iters})")
        return self


class RankingConfig(BaseModel):
    """Настройки CE-MC агрегации рангов."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    sample_factor: int = Field(default=10, ge=1, description="Кандидатов на итерацию: factor·t²")
    elite_fraction: float = Field(default=0.1, gt=0.0, le=1.0)
    smoothing: float = Field(default=0.7, gt=0.0, le=1.0)
    patience: int = Field(default=15, ge=1)


class StudyConfig(BaseModel):
    """Имитационное исследование."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    B: int = Field(default=10, ge=2, description="Число репликаций")
    methods: list[str] = Field(
        default=["m0", "mcmc:h=10", "mcmc+reg:h=10"],
        min_length=1,
        description="Методы: m0, mcmc[:+reg]:h=..., rejection[+reg], importance[+reg]"
    )
    chains: int = Field(default=1, ge=1)
    iters: int = Field(default=20_000, ge=2)
    burnin: int = Field(default=5_000, ge=0)
    rejection_G: int = Field(default=50_000, ge=1)
    importance_G: int = Field(default=50_000, ge=1)
    fit_preset: str | None = Field(default=None, description="Модель подгонки, если отличается от истины")
    full_scale: bool = Field(default=False, description="B=100, 3×60000 итераций, rejection G=250000")
    ranking: RankingConfig = Field(default_factory=RankingConfig)

    @field_validator("fit_preset", mode="before")
    @classmethod
    def validate_fit_preset(cls, v: str | None) -> str | None:
        if v is None:
            return v
        v = str(v).upper()
        if v not in MODEL_PRESETS:
            raise ValueError(f"Модель должна быть одной из: {sorted(MODEL_PRESETS)}")
        return v

    @field_validator("methods")
    @classmethod
    def validate_methods(cls, v: list[str]) -> list[str]:
        labels = [label.strip().lower() for label in v]
        if len(set(labels)) != len(labels):
            raise ValueError(f"Методы не должны повторяться: {labels}")
        return labels

    @model_validator(mode="after")
    def check_burnin(self) -> "StudyConfig":
        if self.burnin >= self.iters:
            raise ValueError(f"burnin ({self.burnin}) должен быть меньше iters ({self.iters})")
        return self


class AppConfig(BaseModel):
    """Корневая конфигурация приложения."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    adjacency: AdjacencyConfig = Field(default_factory=AdjacencyConfig)
    prior: PriorConfig = Field(default_factory=PriorConfig)
    abc: ABCConfig = Field(default_factory=ABCConfig)
    study: StudyConfig = Field(default_factory=StudyConfig)

    seed: int = Field(default=0, ge=0, description="Главный seed")
    threads: int = Field(default=1, ge=1, description="Размер пула потоков")
    output_dir: str = Field(
        default="output",
        description="Директория для сохранения результатов"
    )
