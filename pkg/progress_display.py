from tqdm import tqdm

class TqdmProgress:
    """
    Progress bar over the points of a lambda sweep, drawn on stderr so it
    never mixes with report output.
    """
    def __init__(self, total: int, description: str):
        """
        Args:
            total (int): Number of lambda points in the sweep.
            description (str): A short description for the progress bar.
        """
        self.tqdm_bar = tqdm(
            total=total,
            unit='pt',
            desc=description,
            ncols=80,
            leave=False
        )

    def update(self, count: int = 1):
        self.tqdm_bar.update(count)

    def finish(self):
        """Closes and cleans up the progress bar."""
        self.tqdm_bar.close()
