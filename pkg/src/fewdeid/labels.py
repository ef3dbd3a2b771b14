"""PHI label sets, BIO tag derivation, and fine-to-coarse label normalization."""

from __future__ import annotations

from dataclasses import dataclass, field

# Coarse PHI categories, in canonical order. Order matters: BIO ids are
# derived from it and must be stable across runs.
PHI_TYPES = ("DATE", "AGE", "LOCATION", "NAME", "CONTACT", "PROFESSION", "ID")

OUTSIDE = "O"

# Fine-grained clinical annotation names grouped by the coarse category they
# collapse to. The OTHER group collapses to O.
FINE_TO_COARSE = {
    "EDAD_SUJETO_ASISTENCIA": "AGE",
    "NUMERO_TELEFONO": "CONTACT",
    "NUMERO_FAX": "CONTACT",
    "CORREO_ELECTRONICO": "CONTACT",
    "URL_WEB": "CONTACT",
    "FECHAS": "DATE",
    "ID_ASEGURAMIENTO": "ID",
    "ID_CONTACTO_ASISTENCIAL": "ID",
    "NUMERO_BENEF_PLAN_SALUD": "ID",
    "IDENTIF_VEHICULOS_NRSERIE_PLACAS": "ID",
    "IDENTIF_DISPOSITIVOS_NRSERIE": "ID",
    "IDENTIF_BIOMETRICOS": "ID",
    "ID_SUJETO_ASISTENCIA": "ID",
    "ID_TITULACION_PERSONAL_SANITARIO": "ID",
    "ID_EMPLEO_PERSONAL_SANITARIO": "ID",
    "OTRO_NUMERO_IDENTIF": "ID",
    "HOSPITAL": "LOCATION",
    "INSTITUCION": "LOCATION",
    "CALLE": "LOCATION",
    "TERRITORIO": "LOCATION",
    "PAIS": "LOCATION",
    "CENTRO_SALUD": "LOCATION",
    "NOMBRE_SUJETO_ASISTENCIA": "NAME",
    "NOMBRE_PERSONAL_SANITARIO": "NAME",
    "PROFESION": "PROFESSION",
    "SEXO_SUJETO_ASISTENCIA": OUTSIDE,
    "FAMILIARES_SUJETO_ASISTENCIA": OUTSIDE,
    "OTROS_SUJETO_ASISTENCIA": OUTSIDE,
    "DIREC_PROT_INTERNET": OUTSIDE,
}


class LabelError(ValueError):
    """Raised for unknown labels, fine or coarse."""


def normalize_labels(fine_label: str) -> str:
    """Map a fine-grained annotation name to its coarse PHI name, or O.

    The four OTHER-group names collapse to O; the remaining 25 map onto the
    seven PHI categories.
    """
    try:
        return FINE_TO_COARSE[fine_label]
    except KeyError:
        valid = ", ".join(sorted(FINE_TO_COARSE))
        raise LabelError(
            f"unknown fine-grained label {fine_label!r}; valid names: {valid}"
        ) from None


@dataclass(frozen=True)
class LabelSet:
    """Entity type inventory plus the BIO tag list derived from it.

    bio_labels is [O, B-t1, I-t1, B-t2, I-t2, ...] in phi_types order, so O
    is always id 0 and there are 2*len(phi_types)+1 tags.
    """

    phi_types: tuple[str, ...] = PHI_TYPES
    bio_labels: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        if len(set(self.phi_types)) != len(self.phi_types):
            raise LabelError("duplicate PHI type names")
        bio = [OUTSIDE]
        for t in self.phi_types:
            bio.append(f"B-{t}")
            bio.append(f"I-{t}")
        object.__setattr__(self, "bio_labels", tuple(bio))

    @property
    def num_labels(self) -> int:
        return len(self.bio_labels)

    def label_id(self, label: str) -> int:
        try:
            return self.bio_labels.index(label)
        except ValueError:
            raise LabelError(
                f"unknown BIO label {label!r}; valid labels: {', '.join(self.bio_labels)}"
            ) from None

    def label_name(self, label_id: int) -> str:
        return self.bio_labels[label_id]

    def entity_type(self, label_id: int) -> str | None:
        """Entity type of a BIO id, or None for O."""
        if label_id == 0:
            return None
        return self.bio_labels[label_id][2:]

    def is_begin(self, label_id: int) -> bool:
        return label_id != 0 and self.bio_labels[label_id].startswith("B-")

    def begin_id(self, phi_type: str) -> int:
        return self.label_id(f"B-{phi_type}")

    def inside_id(self, phi_type: str) -> int:
        return self.label_id(f"I-{phi_type}")


DEFAULT_LABEL_SET = LabelSet()
