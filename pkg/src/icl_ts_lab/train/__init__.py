from icl_ts_lab.train.trainer import TrainConfig, eval_test_loss, grad, loss_mse, train

__all__ = ["TrainConfig", "eval_test_loss", "grad", "loss_mse", "train"]
