from .mixing import (
    MIXTURE_PEAK as MIXTURE_PEAK,
    MixtureExample as MixtureExample,
    make_mixture as make_mixture,
)
from .classes import (
    GeneratorKind as GeneratorKind,
    SoundClassSpec as SoundClassSpec,
    generate_source as generate_source,
    default_class_specs as default_class_specs,
)
from .dataset import (
    DatasetConfig as DatasetConfig,
    ManifestEntry as ManifestEntry,
    DatasetManifest as DatasetManifest,
    read_wav as read_wav,
    write_wav as write_wav,
    load_example as load_example,
    build_dataset as build_dataset,
    render_example as render_example,
)
