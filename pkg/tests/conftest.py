from __future__ import annotations

import itertools

import pytest

from cemis.domain import (
    SYNTHETIC_GENERATORS,
    Category,
    Generator,
    ImageRecord,
    Lesion,
    Origin,
    Source,
    StudyConfig,
)

_LESION_CYCLE = (Lesion.EROSION, Lesion.ERYTHEMA, Lesion.ULCER, Lesion.OTHER)


def build_pool(
    real_per_cell: int = 80,
    tide2_per_cell: int = 20,
    other_per_cell: int = 15,
    id_prefix: str = "img",
) -> list[ImageRecord]:
    """A synthetic image pool with `*_per_cell` images in every
    (category, origin) cell for each source/generator.

    Image ids are opaque sequence numbers so nothing about the truth leaks
    through identifiers.
    """
    records: list[ImageRecord] = []
    counter = itertools.count(1)

    def emit(source: Source, generator: Generator, n_per_cell: int):
        for category in Category:
            for origin in Origin:
                for i in range(n_per_cell):
                    lesion = (
                        _LESION_CYCLE[i % len(_LESION_CYCLE)]
                        if category is Category.ABNORMAL
                        else None
                    )
                    image_id = f"{id_prefix}-{next(counter):05d}"
                    records.append(
                        ImageRecord(
                            image_id=image_id,
                            path=f"{image_id}.png",
                            source=source,
                            generator=generator,
                            category=category,
                            lesion=lesion,
                            origin=origin,
                        )
                    )

    emit(Source.REAL, Generator.NONE, real_per_cell)
    for generator in SYNTHETIC_GENERATORS:
        per_cell = tide2_per_cell if generator is Generator.TIDE_II else other_per_cell
        emit(Source.SYNTHETIC, generator, per_cell)
    return records


@pytest.fixture(scope="session")
def paper_pool() -> list[ImageRecord]:
    """Pool large enough for every procedure at the reference sizes."""
    return build_pool()


@pytest.fixture
def config() -> StudyConfig:
    return StudyConfig(study_id="study-1", seed=20240601)
