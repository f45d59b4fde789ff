"""
Fixed radiology phrase bank

Report families supply the synthetic corpus: every fixture report is its
family's core sentences plus one family variant. Caption sentences are
what the mock vision model says about each chest region; they are worded
unlike the report sentences. No bank sentence is a substring of another.
"""

from typing import Dict, List, Tuple


class ReportFamily:
    def __init__(self, name: str, core: Tuple[str, ...], variants: Tuple[str, ...]) -> None:
        self.name = name
        self.core = core
        self.variants = variants

    @property
    def sentences(self) -> Tuple[str, ...]:
        return self.core + self.variants

    def report(self, variant: int) -> str:
        return " ".join(self.core + (self.variants[variant % len(self.variants)],))


REPORT_FAMILIES: Tuple[ReportFamily, ...] = (
    ReportFamily(
        "normal",
        core=(
            "The lungs are clear bilaterally.",
            "The cardiomediastinal silhouette is within normal limits.",
            "There is no pleural effusion or pneumothorax.",
        ),
        variants=(
            "No acute osseous abnormality is identified.",
            "The visualized upper abdomen is unremarkable.",
            "Mild degenerative changes affect the thoracic spine.",
        ),
    ),
    ReportFamily(
        "effusion",
        core=(
            "There is a small left pleural effusion.",
            "Adjacent basilar opacity likely reflects atelectasis.",
            "The heart size is mildly enlarged.",
        ),
        variants=(
            "Pulmonary vascular congestion is present.",
            "The right lung remains well aerated.",
            "A left pneumothorax is not seen.",
        ),
    ),
    ReportFamily(
        "pneumonia",
        core=(
            "There is focal consolidation in the right lower lobe.",
            "These findings are concerning for pneumonia.",
            "The mediastinal contours are unremarkable.",
        ),
        variants=(
            "Follow-up radiographs after treatment are recommended.",
            "Air bronchograms are seen within the consolidation.",
            "The left lung is without focal airspace disease.",
        ),
    ),
    ReportFamily(
        "edema",
        core=(
            "The cardiac silhouette is moderately enlarged.",
            "There is mild interstitial pulmonary edema.",
            "Bilateral hilar vessels are prominent.",
        ),
        variants=(
            "Small bilateral pleural effusions are present.",
            "Kerley B lines are noted at the lung bases.",
            "A right internal jugular catheter terminates in the SVC.",
        ),
    ),
)

# region -> alternatives, one chosen per caption
CAPTION_REGIONS: Dict[str, Tuple[str, ...]] = {
    "lungs": (
        "Both lung fields appear well expanded.",
        "Hazy density projects over a lower lung zone.",
        "Patchy opacity is suggested at one lung base.",
        "Lung markings look coarse throughout.",
    ),
    "heart": (
        "Heart outline appears normal in size.",
        "Heart outline appears broad.",
        "Heart borders are partly obscured.",
        "Heart shadow looks globular.",
    ),
    "mediastinum": (
        "Mediastinum looks midline and narrow.",
        "Mediastinum appears slightly widened.",
        "Trachea and mediastinum look central.",
        "Mediastinal outline looks smooth.",
    ),
    "pleura": (
        "Costophrenic angles look sharp on both sides.",
        "One costophrenic angle looks blunted.",
        "Pleural surfaces look thin and smooth.",
        "A thin pleural line is possibly visible.",
    ),
    "bones": (
        "Ribs and clavicles look intact.",
        "Visible bones show no obvious break.",
        "Spine alignment looks preserved.",
        "Bony thorax appears symmetric.",
    ),
}

CAPTION_ORDER: Tuple[str, ...] = ("lungs", "heart", "mediastinum", "pleura", "bones")


def report_sentences() -> List[str]:
    return [s for family in REPORT_FAMILIES for s in family.sentences]


def caption_sentences() -> List[str]:
    return [s for region in CAPTION_ORDER for s in CAPTION_REGIONS[region]]


def bank_sentences() -> List[str]:
    """Every sentence the mock backend can emit, in a fixed order"""
    return report_sentences() + caption_sentences()
