export * from './batch.js';
export * from './config.js';
export * from './featurize.js';
export * from './metrics.js';
export * from './model.js';
export * from './predict.js';
export * from './random.js';
export * from './rdbc.js';
export * from './tape.js';
export * from './tensor.js';
export * from './train.js';
export * from './view.js';
export * from './models/common.js';
export * from './models/mlp.js';
export * from './models/ncn.js';
export * from './models/params.js';
