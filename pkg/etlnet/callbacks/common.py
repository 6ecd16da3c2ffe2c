class Callback:
    """
    Hooks called by the Trainer. trainer exposes current_epoch, history, model and should_stop.
    """

    def on_epoch_end(self, trainer, record):
        pass

    def on_train_end(self, trainer):
        pass
