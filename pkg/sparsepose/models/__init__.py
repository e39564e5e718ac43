# Models package 
